//! Sparse symmetric matrices and Jacobi-preconditioned conjugate gradients.

use crate::error::{Error, Result};

/// Compressed sparse row matrix with a fixed sparsity pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds the pattern of the given `(row, col)` entries (duplicates merged)
    /// with zero values. Returns, for every input entry, its slot in `values`.
    pub fn with_pattern(n: usize, entries: &[(usize, usize)]) -> (Self, Vec<usize>) {
        let mut order: Vec<usize> = (0..entries.len()).collect();
        order.sort_by_key(|&k| entries[k]);
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::new();
        let mut slots = vec![0; entries.len()];
        let mut last = None;
        for &k in &order {
            let (r, c) = entries[k];
            assert!(r < n && c < n, "entry ({r}, {c}) outside a {n}x{n} matrix");
            if last != Some((r, c)) {
                col_idx.push(c);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
            slots[k] = col_idx.len() - 1;
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        let values = vec![0.0; col_idx.len()];
        (CsrMatrix { n, row_ptr, col_idx, values }, slots)
    }

    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let entries: Vec<(usize, usize)> = triplets.iter().map(|&(r, c, _)| (r, c)).collect();
        let (mut m, slots) = Self::with_pattern(n, &entries);
        for (&(_, _, v), &s) in triplets.iter().zip(&slots) {
            m.values[s] += v;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn clear_values(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let row = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[row.clone()].binary_search(&c) {
            Ok(k) => self.values[row.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate().take(self.n) {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *out = acc;
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).all(|k| (self.values[k] - self.get(self.col_idx[k], r)).abs() <= tol)
        })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (r, row) in d.iter_mut().enumerate() {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                row[self.col_idx[k]] = self.values[k];
            }
        }
        d
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    /// Final true relative residual `|b - Ax| / |b|`.
    pub residual: f64,
}

/// Default iteration cap for `unknowns` unknowns.
pub fn default_max_iterations(unknowns: usize) -> usize {
    20 * (unknowns as f64).sqrt().ceil() as usize + 1000
}

/// Jacobi-preconditioned CG for SPD `a`, starting from `x`.
///
/// Stops when the recursive residual drops below `tol |b|`. A non-positive
/// curvature `p^T A p <= 0` means `a` is not SPD and is reported as failure.
pub fn pcg(a: &CsrMatrix, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<CgStats> {
    let n = a.dim();
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats { iterations: 0, residual: 0.0 });
    }
    let mut r = vec![0.0; n];
    a.mul_vec(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, d)| ri * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut it = 0;
    let mut rel = norm(&r) / bnorm;
    while rel > tol {
        if it >= max_iter {
            return Err(Error::NoConvergence { iterations: it, residual: rel });
        }
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NoConvergence { iterations: it, residual: rel });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
        rel = norm(&r) / bnorm;
    }
    a.mul_vec(x, &mut ap);
    let true_res = ap.iter().zip(b).map(|(v, bi)| (bi - v) * (bi - v)).sum::<f64>().sqrt() / bnorm;
    Ok(CgStats { iterations: it, residual: true_res })
}

/// PCG followed by iterative refinement on the true residual.
///
/// CG's recursive residual drifts from `b - Ax` in floating point; a few
/// correction solves bring the true residual down to round-off, which the
/// local conservation checks depend on.
pub fn solve_spd(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, CgStats)> {
    let n = a.dim();
    let mut x = vec![0.0; n];
    let mut stats = pcg(a, b, &mut x, tol, max_iter)?;
    let bnorm = norm(b);
    let mut iterations = stats.iterations;
    let mut r = vec![0.0; n];
    let mut best = stats.residual;
    for _ in 0..4 {
        a.mul_vec(&x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let rnorm = norm(&r);
        if bnorm == 0.0 || rnorm <= 1e-3 * tol * bnorm {
            break;
        }
        let mut d = vec![0.0; n];
        let s = pcg(a, &r, &mut d, tol, max_iter)?;
        iterations += s.iterations;
        let candidate: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + di).collect();
        a.mul_vec(&candidate, &mut r);
        let res = r.iter().zip(b).map(|(v, bi)| (bi - v) * (bi - v)).sum::<f64>().sqrt() / bnorm;
        if res >= best {
            break;
        }
        best = res;
        x = candidate;
    }
    stats.iterations = iterations;
    stats.residual = best;
    Ok((x, stats))
}
