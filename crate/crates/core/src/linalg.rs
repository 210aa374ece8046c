//! Small dense and sparse linear-algebra helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Systems up to this size are solved directly.
pub const DIRECT_SOLVE_LIMIT: usize = 2000;

/// A sparse row-stochastic (or sub-stochastic) matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// y = P x
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|(j, p)| p * x[*j]).sum())
            .collect()
    }

    /// y = Pᵀ x
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n()];
        for (i, row) in self.rows.iter().enumerate() {
            if x[i] == 0.0 {
                continue;
            }
            for (j, p) in row {
                y[*j] += p * x[i];
            }
        }
        y
    }
}

pub fn sup_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn lu_solve(a: DMatrix<f64>, b: DVector<f64>) -> Result<Vec<f64>> {
    a.lu()
        .solve(&b)
        .map(|x| x.iter().copied().collect())
        .ok_or_else(|| Error::validation("singular linear system"))
}

/// Solves x = r + γ P x.
pub fn solve_discounted(p: &SparseRows, r: &[f64], gamma: f64, tol: f64) -> Result<Vec<f64>> {
    let n = p.n();
    if n <= DIRECT_SOLVE_LIMIT {
        let mut a = DMatrix::<f64>::identity(n, n);
        for (i, row) in p.rows.iter().enumerate() {
            for (j, q) in row {
                a[(i, *j)] -= gamma * q;
            }
        }
        lu_solve(a, DVector::from_column_slice(r))
    } else {
        let mut x = r.to_vec();
        let stop = tol * (1.0 - gamma) / gamma.max(f64::MIN_POSITIVE);
        loop {
            let px = p.mul_vec(&x);
            let next: Vec<f64> = r.iter().zip(&px).map(|(ri, v)| ri + gamma * v).collect();
            let diff = sup_norm_diff(&next, &x);
            x = next;
            if diff <= stop {
                return Ok(x);
            }
        }
    }
}

/// Solves d = μ + γ Pᵀ d.
pub fn solve_discounted_transposed(
    p: &SparseRows,
    mu: &[f64],
    gamma: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    let n = p.n();
    if n <= DIRECT_SOLVE_LIMIT {
        let mut a = DMatrix::<f64>::identity(n, n);
        for (i, row) in p.rows.iter().enumerate() {
            for (j, q) in row {
                a[(*j, i)] -= gamma * q;
            }
        }
        lu_solve(a, DVector::from_column_slice(mu))
    } else {
        let mut d = mu.to_vec();
        let stop = tol * (1.0 - gamma);
        loop {
            let pd = p.tr_mul_vec(&d);
            let next: Vec<f64> = mu.iter().zip(&pd).map(|(m, v)| m + gamma * v).collect();
            let diff: f64 = next.iter().zip(&d).map(|(a, b)| (a - b).abs()).sum();
            d = next;
            if diff <= stop {
                return Ok(d);
            }
        }
    }
}

/// Dense solve of a general square system.
pub fn solve_dense(a: Vec<Vec<f64>>, b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let m = DMatrix::from_fn(n, n, |i, j| a[i][j]);
    lu_solve(m, DVector::from_column_slice(b))
}

/// Stationary distribution of an irreducible stochastic matrix given as
/// sparse rows over `0..n`.
pub fn stationary_vector(p: &SparseRows) -> Result<Vec<f64>> {
    let n = p.n();
    if n <= DIRECT_SOLVE_LIMIT {
        // (Pᵀ − I) ζ = 0 with the last equation replaced by Σ ζ = 1
        let mut a = DMatrix::<f64>::zeros(n, n);
        for (i, row) in p.rows.iter().enumerate() {
            for (j, q) in row {
                a[(*j, i)] += q;
            }
        }
        for i in 0..n {
            a[(i, i)] -= 1.0;
        }
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let mut b = DVector::zeros(n);
        b[n - 1] = 1.0;
        let mut z = lu_solve(a, b)?;
        z.iter_mut().for_each(|x| {
            if *x < 0.0 && *x > -1e-14 {
                *x = 0.0
            }
        });
        let s: f64 = z.iter().sum();
        z.iter_mut().for_each(|x| *x /= s);
        Ok(z)
    } else {
        // the lazy chain (I + P)/2 shares the stationary law and is aperiodic
        let mut z = vec![1.0 / n as f64; n];
        for _ in 0..1_000_000 {
            let pz = p.tr_mul_vec(&z);
            let next: Vec<f64> = z.iter().zip(&pz).map(|(a, b)| 0.5 * (a + b)).collect();
            let diff: f64 = next.iter().zip(&z).map(|(a, b)| (a - b).abs()).sum();
            z = next;
            if diff < 1e-14 {
                break;
            }
        }
        Ok(z)
    }
}

pub fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discounted_solve_matches_geometric_series() {
        let p = SparseRows {
            rows: vec![vec![(0, 1.0)]],
        };
        let v = solve_discounted(&p, &[1.0], 0.9, 1e-12).unwrap();
        assert!((v[0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn flip_chain_is_uniform() {
        let p = SparseRows {
            rows: vec![vec![(1, 1.0)], vec![(0, 1.0)]],
        };
        let z = stationary_vector(&p).unwrap();
        assert!((z[0] - 0.5).abs() < 1e-15 && (z[1] - 0.5).abs() < 1e-15);
    }
}
