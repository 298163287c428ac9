//! Sparse symmetric matrices and SPD solves.
//!
//! Matrices are stored in full CSR form. The direct path hands the upper
//! triangle of the CSR rows (equivalently the lower triangle of the CSC
//! columns) to a supernodal sparse Cholesky whose symbolic analysis is
//! reused for every matrix sharing the pattern.

use std::sync::Arc;

use faer::prelude::SpSolver;
use faer::sparse::linalg::solvers::{Cholesky, SymbolicCholesky};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::Side;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-compressed sparsity pattern with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityPattern {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
}

impl SparsityPattern {
    /// Pattern of a block-coupled system: every pair of scalar dofs sharing
    /// a group is coupled, and each scalar dof expands to `block` unknowns
    /// (numbered `dof * block + component`).
    pub fn from_groups<'a>(
        nscalar: usize,
        groups: impl Iterator<Item = &'a [usize]>,
        block: usize,
    ) -> Self {
        let mut rows: Vec<Vec<u32>> = vec![Vec::new(); nscalar];
        let mut compacted: Vec<usize> = vec![0; nscalar];
        for g in groups {
            for &i in g {
                let row = &mut rows[i];
                row.extend(g.iter().map(|&j| j as u32));
                if row.len() > 2 * compacted[i].max(64) {
                    row.sort_unstable();
                    row.dedup();
                    compacted[i] = row.len();
                }
            }
        }
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
        }
        let n = nscalar * block;
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let total: usize = rows.iter().map(|r| r.len() * block * block).sum();
        let mut cols = Vec::with_capacity(total);
        for row in &rows {
            for _ in 0..block {
                for &j in row {
                    for c in 0..block {
                        cols.push(j as usize * block + c);
                    }
                }
                row_ptr.push(cols.len());
            }
        }
        Self { n, row_ptr, cols }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// Storage position of entry `(i, j)`, if present.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        self.row(i).binary_search(&j).ok().map(|k| start + k)
    }
}

/// Symmetric sparse matrix over a shared pattern.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let nnz = pattern.nnz();
        Self { pattern, values: vec![0.0; nnz] }
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn dim(&self) -> usize {
        self.pattern.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.pattern.position(i, j).expect("entry outside sparsity pattern");
        self.values[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.position(i, j).map_or(0.0, |k| self.values[k])
    }

    /// Adds the dense row-major block `local` (size `dofs.len()²`) at the
    /// global indices `dofs`.
    pub fn add_dense(&mut self, dofs: &[usize], local: &[f64]) {
        let n = dofs.len();
        debug_assert_eq!(local.len(), n * n);
        // sort the local indices once so each row is scanned linearly
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_unstable_by_key(|&k| dofs[k]);
        for (a, &gi) in dofs.iter().enumerate() {
            let start = self.pattern.row_ptr[gi];
            let row = self.pattern.row(gi);
            let mut cursor = 0;
            for &b in &order {
                let gj = dofs[b];
                while row[cursor] < gj {
                    cursor += 1;
                }
                debug_assert_eq!(row[cursor], gj);
                self.values[start + cursor] += local[a * n + b];
            }
        }
    }

    pub fn add_matrix(&mut self, other: &CsrMatrix, scale: f64) {
        assert!(Arc::ptr_eq(&self.pattern, &other.pattern) || *self.pattern == *other.pattern);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let p = &self.pattern;
        (0..p.n)
            .map(|i| {
                (p.row_ptr[i]..p.row_ptr[i + 1])
                    .map(|k| self.values[k] * x[p.cols[k]])
                    .sum()
            })
            .collect()
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    /// max |A_ij - A_ji| / max |A_ij|.
    pub fn symmetry_defect(&self) -> f64 {
        let p = &self.pattern;
        let mut scale: f64 = 0.0;
        let mut defect: f64 = 0.0;
        for i in 0..p.n {
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                let j = p.cols[k];
                scale = scale.max(self.values[k].abs());
                defect = defect.max((self.values[k] - self.get(j, i)).abs());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            defect / scale
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let p = &self.pattern;
        let mut m = nalgebra::DMatrix::zeros(p.n, p.n);
        for i in 0..p.n {
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                m[(i, p.cols[k])] = self.values[k];
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinearSolverKind {
    /// Sparse Cholesky below `cg_threshold` unknowns, Jacobi-PCG above.
    Auto { cg_threshold: usize },
    Direct,
    Cg,
}

impl Default for LinearSolverKind {
    fn default() -> Self {
        LinearSolverKind::Auto { cg_threshold: 400_000 }
    }
}

/// SPD solver bound to one sparsity pattern.
pub struct SpdSolver {
    pattern: Arc<SparsityPattern>,
    kind: LinearSolverKind,
    direct: Option<DirectPlan>,
    pub cg_tolerance: f64,
    pub cg_max_iterations: usize,
}

struct DirectPlan {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    /// CSR storage index of each lower-CSC entry.
    source: Vec<usize>,
    symbolic: SymbolicCholesky<usize>,
}

impl SpdSolver {
    pub fn new(pattern: Arc<SparsityPattern>, kind: LinearSolverKind) -> Result<Self> {
        let use_direct = match kind {
            LinearSolverKind::Direct => true,
            LinearSolverKind::Cg => false,
            LinearSolverKind::Auto { cg_threshold } => pattern.n <= cg_threshold,
        };
        let direct = if use_direct { Some(DirectPlan::new(&pattern)?) } else { None };
        Ok(Self { pattern, kind, direct, cg_tolerance: 1e-10, cg_max_iterations: 20_000 })
    }

    pub fn kind(&self) -> LinearSolverKind {
        self.kind
    }

    pub fn solve(&self, a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
        self.factorize(a)?.solve(b)
    }

    /// Factorization (or preconditioned iteration setup) for repeated solves.
    pub fn factorize<'a>(&self, a: &'a CsrMatrix) -> Result<Factor<'a>> {
        assert!(Arc::ptr_eq(&self.pattern, &a.pattern) || *self.pattern == *a.pattern);
        match &self.direct {
            Some(plan) if a.dim() > 0 => Ok(Factor::Direct(plan.factorize(a)?)),
            _ => Ok(Factor::Iterative { matrix: a, tolerance: self.cg_tolerance, max_iterations: self.cg_max_iterations }),
        }
    }
}

pub enum Factor<'a> {
    Direct(Cholesky<usize, f64>),
    Iterative { matrix: &'a CsrMatrix, tolerance: f64, max_iterations: usize },
}

impl Factor<'_> {
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        match self {
            Factor::Direct(chol) => {
                let n = b.len();
                let mut x = faer::Col::<f64>::from_fn(n, |i| b[i]);
                chol.solve_in_place(x.as_mut());
                let out: Vec<f64> = (0..n).map(|i| x[i]).collect();
                if out.iter().any(|v| !v.is_finite()) {
                    return Err(Error::SingularSystem("non-finite solution".into()));
                }
                Ok(out)
            }
            Factor::Iterative { matrix, tolerance, max_iterations } => {
                if matrix.dim() == 0 {
                    return Ok(Vec::new());
                }
                pcg(matrix, b, *tolerance, *max_iterations)
            }
        }
    }
}

impl DirectPlan {
    fn new(pattern: &SparsityPattern) -> Result<Self> {
        let n = pattern.n;
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut source = Vec::new();
        col_ptr.push(0);
        for i in 0..n {
            for k in pattern.row_ptr[i]..pattern.row_ptr[i + 1] {
                if pattern.cols[k] >= i {
                    row_idx.push(pattern.cols[k]);
                    source.push(k);
                }
            }
            col_ptr.push(row_idx.len());
        }
        let symbolic_ref = SymbolicSparseColMatRef::new_checked(n, n, &col_ptr, None, &row_idx);
        let symbolic = SymbolicCholesky::try_new(symbolic_ref, Side::Lower)
            .map_err(|e| Error::SingularSystem(format!("symbolic analysis failed: {e:?}")))?;
        Ok(Self { col_ptr, row_idx, source, symbolic })
    }

    fn factorize(&self, a: &CsrMatrix) -> Result<Cholesky<usize, f64>> {
        let n = a.dim();
        let values: Vec<f64> = self.source.iter().map(|&k| a.values[k]).collect();
        let symbolic_ref = SymbolicSparseColMatRef::new_checked(n, n, &self.col_ptr, None, &self.row_idx);
        let mat = SparseColMatRef::<usize, f64>::new(symbolic_ref, &values);
        Cholesky::try_new_with_symbolic(self.symbolic.clone(), mat, Side::Lower).map_err(|e| {
            let diag = a.diagonal();
            let (imin, dmin) = diag
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, &d)| if d < acc.1 { (i, d) } else { acc });
            Error::SingularSystem(format!(
                "Cholesky failed ({e:?}); {n} unknowns, smallest diagonal {dmin:e} at unknown {imin}"
            ))
        })
    }
}

/// Jacobi-preconditioned conjugate gradients.
pub fn pcg(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = a.dim();
    let diag = a.diagonal();
    if let Some((i, d)) = diag.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
        return Err(Error::SingularSystem(format!("non-positive diagonal {d:e} at unknown {i}")));
    }
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for it in 0..max_iter {
        let ap = a.mul_vec(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(Error::SingularSystem(format!("matrix not positive definite (pᵀAp = {pap:e})")));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm <= tol * bnorm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        if it + 1 == max_iter {
            return Err(Error::NotConverged { iterations: max_iter, residual: rnorm / bnorm });
        }
    }
    Err(Error::NotConverged { iterations: max_iter, residual: f64::NAN })
}
