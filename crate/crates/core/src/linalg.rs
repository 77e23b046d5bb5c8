//! Linear solves for systems `(I - Q) x = b`, where `Q` is a substochastic
//! restriction of the chain to non-target configurations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Above this many unknowns the iterative solver is used.
pub const DENSE_LIMIT: usize = 2000;
/// Relative residual tolerance of the iterative solver.
pub const KRYLOV_TOL: f64 = 1e-10;

/// Square sparse matrix in compressed-row form.
#[derive(Clone, Debug, Default)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Builds from per-row `(col, value)` lists.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut m = Csr { n, row_ptr: Vec::with_capacity(n + 1), ..Default::default() };
        m.row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                m.cols.push(c);
                m.vals.push(v);
            }
            m.row_ptr.push(m.cols.len());
        }
        m
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |e| (self.cols[e], self.vals[e]))
    }

    pub fn transpose(&self) -> Csr {
        let mut counts = vec![0usize; self.n + 1];
        for &c in &self.cols {
            counts[c + 1] += 1;
        }
        for i in 0..self.n {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0; self.cols.len()];
        let mut vals = vec![0.0; self.vals.len()];
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                cols[next[c]] = r;
                vals[next[c]] = v;
                next[c] += 1;
            }
        }
        Csr { n: self.n, row_ptr: counts, cols, vals }
    }

    /// `y = x - Q x`.
    fn apply_i_minus(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.n {
            y[r] = x[r] - self.row(r).map(|(c, v)| v * x[c]).sum::<f64>();
        }
    }

    /// `b_r - x_r + (Q x)_r`, accumulated with error-free transformations.
    fn residual_row(&self, r: usize, x: &[f64], b: f64) -> f64 {
        let (mut s, mut e) = two_sum(b, -x[r]);
        for (c, v) in self.row(r) {
            let p = v * x[c];
            let pe = v.mul_add(x[c], -p);
            let (t, te) = two_sum(s, p);
            s = t;
            e += te + pe;
        }
        s + e
    }

    /// `y = Q x`.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    /// `y = Q^T x`.
    pub fn mul_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                y[c] += v * x[r];
            }
        }
        y
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// A prepared solver for `(I - Q) x = b`, reusable across right-hand sides.
pub enum Factor {
    Dense { lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>, q: Csr },
    Sparse { q: Csr, diag: Vec<f64> },
}

impl Factor {
    /// Factors `I - Q` (or its transpose when `transpose` is set).
    pub fn new(q: &Csr, transpose: bool, dense_limit: usize) -> Result<Self> {
        let q = if transpose { q.transpose() } else { q.clone() };
        if q.n <= dense_limit {
            let mut m = DMatrix::<f64>::identity(q.n, q.n);
            for r in 0..q.n {
                for (c, v) in q.row(r) {
                    m[(r, c)] -= v;
                }
            }
            Ok(Factor::Dense { lu: m.lu(), q })
        } else {
            let mut diag = vec![1.0; q.n];
            for (r, d) in diag.iter_mut().enumerate() {
                *d -= q.row(r).filter(|&(c, _)| c == r).map(|(_, v)| v).sum::<f64>();
                if *d <= 0.0 {
                    return Err(Error::Solver(format!("singular diagonal at row {r}")));
                }
            }
            Ok(Factor::Sparse { q, diag })
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        match self {
            Factor::Dense { lu, q } => {
                let singular = || Error::Solver("singular system".into());
                let mut x = lu.solve(&DVector::from_column_slice(b)).ok_or_else(singular)?;
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Solver("non-finite solution".into()));
                }
                // one refinement step against a compensated residual
                let r: Vec<f64> = (0..q.n).map(|i| q.residual_row(i, x.as_slice(), b[i])).collect();
                let dx = lu.solve(&DVector::from_vec(r)).ok_or_else(singular)?;
                if dx.iter().all(|v| v.is_finite()) {
                    x += dx;
                }
                Ok(x.as_slice().to_vec())
            }
            Factor::Sparse { q, diag } => bicgstab(q, diag, b),
        }
    }
}

/// Jacobi-preconditioned BiCGSTAB on `(I - Q) x = b`, capped at `10 n` iterations.
fn bicgstab(q: &Csr, diag: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let n = q.n;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let norm = |a: &[f64]| dot(a, a).sqrt();
    let precond = |v: &[f64]| v.iter().zip(diag).map(|(x, d)| x / d).collect::<Vec<_>>();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    for _ in 0..(10 * n).max(10) {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let ph = precond(&p);
        q.apply_i_minus(&ph, &mut v);
        alpha = rho / dot(&r0, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= KRYLOV_TOL * bnorm {
            for i in 0..n {
                x[i] += alpha * ph[i];
            }
            return Ok(x);
        }
        let sh = precond(&s);
        q.apply_i_minus(&sh, &mut t);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * ph[i] + omega * sh[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm(&r) <= KRYLOV_TOL * bnorm {
            return Ok(x);
        }
        if !omega.is_finite() || omega == 0.0 {
            break;
        }
    }
    Err(Error::Solver(format!("BiCGSTAB did not converge on {n} unknowns")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_substochastic(n: usize, seed: u64) -> Csr {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n)
            .map(|_| {
                let k = rng.gen_range(1..4);
                let leak: f64 = rng.gen_range(0.05..0.3);
                let mut row: Vec<(usize, f64)> = (0..k).map(|_| (rng.gen_range(0..n), 0.0)).collect();
                row.sort_by_key(|e| e.0);
                row.dedup_by_key(|e| e.0);
                let w: Vec<f64> = row.iter().map(|_| rng.gen_range(0.1..1.0)).collect();
                let total: f64 = w.iter().sum();
                row.iter_mut().zip(w).for_each(|(e, w)| e.1 = (1.0 - leak) * w / total);
                row
            })
            .collect();
        Csr::from_rows(rows)
    }

    fn residual(q: &Csr, x: &[f64], b: &[f64], transpose: bool) -> f64 {
        let qx = if transpose { q.mul_transpose(x) } else { q.mul(x) };
        (0..q.n).map(|i| (x[i] - qx[i] - b[i]).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn dense_and_iterative_agree() {
        for seed in 0..5 {
            let q = random_substochastic(60, seed);
            let b: Vec<f64> = (0..60).map(|i| 1.0 + (i % 3) as f64).collect();
            for transpose in [false, true] {
                let dense = Factor::new(&q, transpose, DENSE_LIMIT).unwrap().solve(&b).unwrap();
                let sparse = Factor::new(&q, transpose, 0).unwrap().solve(&b).unwrap();
                assert!(residual(&q, &dense, &b, transpose) < 1e-10);
                for (d, s) in dense.iter().zip(&sparse) {
                    assert!((d - s).abs() < 1e-7 * (1.0 + d.abs()));
                }
            }
        }
    }

    #[test]
    fn transpose_round_trip() {
        let q = random_substochastic(20, 9);
        let tt = q.transpose().transpose();
        assert_eq!(tt.row_ptr, q.row_ptr);
        assert_eq!(tt.cols, q.cols);
    }
}
