//! Sparse symmetric kernels: CSR storage, LDLᵀ with greedy minimum-degree
//! ordering, and preconditioned conjugate gradient.

use std::collections::{BTreeMap, BTreeSet};

/// Symmetric matrix in CSR form with both triangles stored; columns sorted per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate `(row, col, value)` triplets.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        for &(i, j, v) in triplets {
            *rows[i].entry(j).or_insert(0.0) += v;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (j, v) in row {
                col_idx.push(j);
                vals.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// Per-row sum of term magnitudes `Σ_j |a_ij x_j|`.
    pub fn abs_row_terms(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(j, v)| (v * x[j]).abs()).sum())
            .collect()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }
}

struct Step {
    pivot: usize,
    d: f64,
    /// Off-diagonal entries of the pivot row at elimination time.
    col: Vec<(usize, f64)>,
}

/// `P A Pᵀ = L D Lᵀ` with the elimination order chosen greedily by current degree.
pub struct LdlFactor {
    n: usize,
    steps: Vec<Step>,
    fill: usize,
}

impl LdlFactor {
    /// Fails with the pivot index when a pivot is not safely positive.
    pub fn new(a: &CsrMatrix) -> Result<Self, usize> {
        let n = a.dim();
        let mut diag = a.diag();
        let scale: Vec<f64> = diag.iter().map(|d| d.abs()).collect();
        let mut adj: Vec<BTreeMap<usize, f64>> = (0..n)
            .map(|i| a.row(i).filter(|(j, _)| *j != i).collect())
            .collect();
        let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|i| (adj[i].len(), i)).collect();
        let mut steps = Vec::with_capacity(n);
        let mut fill = 0;

        while let Some((_, p)) = queue.pop_first() {
            let d = diag[p];
            if !(d > 1e-13 * scale[p]) || !d.is_finite() {
                return Err(p);
            }
            let nbrs: Vec<(usize, f64)> = std::mem::take(&mut adj[p]).into_iter().collect();
            for &(j, _) in &nbrs {
                queue.remove(&(adj[j].len(), j));
                adj[j].remove(&p);
            }
            for (x, &(j, aj)) in nbrs.iter().enumerate() {
                diag[j] -= aj * aj / d;
                for &(k, ak) in &nbrs[x + 1..] {
                    let upd = aj * ak / d;
                    let e = adj[j].entry(k).or_insert_with(|| {
                        fill += 1;
                        0.0
                    });
                    *e -= upd;
                    *adj[k].entry(j).or_insert(0.0) -= upd;
                }
            }
            for &(j, _) in &nbrs {
                queue.insert((adj[j].len(), j));
            }
            steps.push(Step {
                pivot: p,
                d,
                col: nbrs,
            });
        }
        Ok(Self { n, steps, fill })
    }

    pub fn fill_in(&self) -> usize {
        self.fill
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(b.len(), self.n);
        let mut y = b.to_vec();
        for s in &self.steps {
            let yp = y[s.pivot];
            if yp != 0.0 {
                for &(j, a) in &s.col {
                    y[j] -= a / s.d * yp;
                }
            }
        }
        for s in &self.steps {
            y[s.pivot] /= s.d;
        }
        for s in self.steps.iter().rev() {
            let mut x = y[s.pivot];
            for &(j, a) in &s.col {
                x -= a / s.d * y[j];
            }
            y[s.pivot] = x;
        }
        y
    }
}

/// Zero-fill incomplete Cholesky factor, lower triangle by rows.
pub struct Ic0 {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl Ic0 {
    /// `None` on breakdown (non-positive pivot).
    pub fn new(a: &CsrMatrix) -> Option<Self> {
        let n = a.dim();
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut vals: Vec<f64> = Vec::new();
        for i in 0..n {
            let start = col_idx.len();
            for (j, v) in a.row(i).filter(|(j, _)| *j <= i) {
                col_idx.push(j);
                vals.push(v);
            }
            let end = col_idx.len();
            if end == start || col_idx[end - 1] != i {
                return None;
            }
            for p in start..end - 1 {
                let k = col_idx[p];
                // Sparse dot of rows i and k over columns < k.
                let (mut s, mut q) = (0.0, row_ptr[k]);
                let kend = row_ptr[k + 1] - 1;
                for r in start..p {
                    let c = col_idx[r];
                    while q < kend && col_idx[q] < c {
                        q += 1;
                    }
                    if q < kend && col_idx[q] == c {
                        s += vals[r] * vals[q];
                    }
                }
                vals[p] = (vals[p] - s) / vals[kend];
            }
            let d = vals[end - 1] - vals[start..end - 1].iter().map(|v| v * v).sum::<f64>();
            if !(d > 0.0) {
                return None;
            }
            vals[end - 1] = d.sqrt();
            row_ptr.push(end);
        }
        Some(Self {
            row_ptr,
            col_idx,
            vals,
        })
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        for i in 0..n {
            let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1] - 1);
            let mut acc = r[i];
            for p in s..e {
                acc -= self.vals[p] * z[self.col_idx[p]];
            }
            z[i] = acc / self.vals[e];
        }
        for i in (0..n).rev() {
            let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1] - 1);
            z[i] /= self.vals[e];
            let zi = z[i];
            for p in s..e {
                z[self.col_idx[p]] -= self.vals[p] * zi;
            }
        }
    }
}

pub enum Preconditioner {
    Ic0(Ic0),
    Jacobi(Vec<f64>),
}

impl Preconditioner {
    /// Incomplete Cholesky, falling back to the diagonal on breakdown.
    pub fn new(a: &CsrMatrix) -> Self {
        match Ic0::new(a) {
            Some(f) => Preconditioner::Ic0(f),
            None => Preconditioner::Jacobi(
                a.diag()
                    .into_iter()
                    .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
                    .collect(),
            ),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preconditioner::Ic0(_) => "ic0",
            Preconditioner::Jacobi(_) => "jacobi",
        }
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Preconditioner::Ic0(f) => f.apply(r, z),
            Preconditioner::Jacobi(inv) => {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(inv) {
                    *zi = ri * di;
                }
            }
        }
    }
}

pub struct PcgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` from `x = 0` until `‖r‖ ≤ tol_abs`.
pub fn pcg(a: &CsrMatrix, m: &Preconditioner, b: &[f64], tol_abs: f64, max_iter: usize) -> PcgOutcome {
    let n = a.dim();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    if dot(&r, &r).sqrt() <= tol_abs {
        return PcgOutcome {
            x,
            iterations: 0,
            converged: true,
        };
    }
    let mut z = vec![0.0; n];
    m.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return PcgOutcome {
                x,
                iterations: it,
                converged: false,
            };
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        if dot(&r, &r).sqrt() <= tol_abs {
            return PcgOutcome {
                x,
                iterations: it,
                converged: true,
            };
        }
        m.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    PcgOutcome {
        x,
        iterations: max_iter,
        converged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 1-D Laplacian with a grounded end, plus a leak on every node.
    fn chain(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + 0.01 * i as f64));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, &t)
    }

    fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
        let mut ax = vec![0.0; b.len()];
        a.matvec(x, &mut ax);
        ax.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn ldl_solves_chain() {
        let a = chain(50);
        assert!(a.is_symmetric());
        let b: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let f = LdlFactor::new(&a).unwrap();
        let x = f.solve(&b);
        assert!(residual(&a, &x, &b) < 1e-12);
        assert_eq!(f.fill_in(), 0, "a chain eliminates without fill");
    }

    #[test]
    fn ldl_matches_dense_gauss() {
        // Dense SPD: A = M Mᵀ + n I.
        let n = 6;
        let m: Vec<f64> = (0..n * n).map(|k| ((k * 7 % 11) as f64) / 11.0 - 0.4).collect();
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let mut v: f64 = (0..n).map(|k| m[i * n + k] * m[j * n + k]).sum();
                if i == j {
                    v += n as f64;
                }
                t.push((i, j, v));
            }
        }
        let a = CsrMatrix::from_triplets(n, &t);
        let b = vec![1.0, -2.0, 0.5, 3.0, 0.0, 1.5];
        let x = LdlFactor::new(&a).unwrap().solve(&b);
        assert!(residual(&a, &x, &b) < 1e-12);
    }

    #[test]
    fn singular_pivot_reported() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 1, 0.0)]);
        assert_eq!(LdlFactor::new(&a).err(), Some(1));
    }

    #[test]
    fn pcg_both_preconditioners() {
        let a = chain(200);
        let b: Vec<f64> = (0..200).map(|i| 1.0 + (i % 3) as f64).collect();
        let bn = dot(&b, &b).sqrt();
        let ic = Preconditioner::new(&a);
        assert_eq!(ic.name(), "ic0");
        let jac = Preconditioner::Jacobi(a.diag().iter().map(|d| 1.0 / d).collect());
        for m in [ic, jac] {
            let out = pcg(&a, &m, &b, 1e-12 * bn, 2000);
            assert!(out.converged);
            assert!(residual(&a, &out.x, &b) <= 1e-11 * bn);
        }
    }

    #[test]
    fn ic0_is_exact_on_tridiagonal() {
        let a = chain(30);
        let m = Preconditioner::new(&a);
        let b = vec![1.0; 30];
        let out = pcg(&a, &m, &b, 1e-13, 5);
        assert!(out.converged);
        assert!(out.iterations <= 2);
    }
}
