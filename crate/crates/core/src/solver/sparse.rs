//! Symmetric block-sparse matrices with 6x6 blocks and a block Cholesky
//! factorization in natural (node) ordering.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix6, Vector6};
use thiserror::Error;

pub const BLOCK: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("matrix is not positive definite (pivot block {block})")]
pub struct NotPositiveDefinite {
    pub block: usize,
}

/// Lower triangle of a symmetric matrix, stored by block column.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSparseMatrix {
    columns: Vec<BTreeMap<usize, Matrix6<f64>>>,
}

impl BlockSparseMatrix {
    pub fn new(blocks: usize) -> Self {
        Self {
            columns: vec![BTreeMap::new(); blocks],
        }
    }

    pub fn block_count(&self) -> usize {
        self.columns.len()
    }

    pub fn dim(&self) -> usize {
        self.columns.len() * BLOCK
    }

    /// Adds `block` at `(row, col)`; the symmetric counterpart is implied.
    pub fn add(&mut self, row: usize, col: usize, block: &Matrix6<f64>) {
        if row >= col {
            *self.columns[col].entry(row).or_insert_with(Matrix6::zeros) += block;
        } else {
            *self.columns[row].entry(col).or_insert_with(Matrix6::zeros) += block.transpose();
        }
    }

    pub fn set(&mut self, row: usize, col: usize, block: Matrix6<f64>) {
        if row >= col {
            self.columns[col].insert(row, block);
        } else {
            self.columns[row].insert(col, block.transpose());
        }
    }

    pub fn get(&self, row: usize, col: usize) -> Option<Matrix6<f64>> {
        if row >= col {
            self.columns[col].get(&row).copied()
        } else {
            self.columns[row].get(&col).map(|b| b.transpose())
        }
    }

    /// Stored lower-triangle blocks `(row, col, block)` with `row >= col`.
    pub fn lower_blocks(&self) -> impl Iterator<Item = (usize, usize, &Matrix6<f64>)> {
        self.columns
            .iter()
            .enumerate()
            .flat_map(|(c, col)| col.iter().map(move |(&r, b)| (r, c, b)))
    }

    pub fn nnz_blocks(&self) -> usize {
        self.columns.iter().map(|c| c.len()).sum()
    }

    /// Drops every off-diagonal block touching `k` and sets the diagonal to `I`.
    pub fn clamp_to_identity(&mut self, k: usize) {
        self.columns[k].clear();
        self.columns[k].insert(k, Matrix6::identity());
        for col in self.columns.iter_mut().take(k) {
            col.remove(&k);
        }
    }

    pub fn diagonal(&self) -> DVector<f64> {
        let mut d = DVector::zeros(self.dim());
        for (k, col) in self.columns.iter().enumerate() {
            if let Some(b) = col.get(&k) {
                for i in 0..BLOCK {
                    d[k * BLOCK + i] = b[(i, i)];
                }
            }
        }
        d
    }

    /// Adds `lambda * diag(self)` to the diagonal.
    pub fn damped(&self, lambda: f64) -> Self {
        let mut out = self.clone();
        if lambda != 0.0 {
            for (k, col) in out.columns.iter_mut().enumerate() {
                if let Some(b) = col.get_mut(&k) {
                    for i in 0..BLOCK {
                        b[(i, i)] += lambda * b[(i, i)];
                    }
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (r, c, b) in self.lower_blocks() {
            m.view_mut((r * BLOCK, c * BLOCK), (BLOCK, BLOCK)).copy_from(b);
            if r != c {
                m.view_mut((c * BLOCK, r * BLOCK), (BLOCK, BLOCK))
                    .copy_from(&b.transpose());
            }
        }
        m
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.dim());
        for (r, c, b) in self.lower_blocks() {
            let xc = x.fixed_rows::<BLOCK>(c * BLOCK).into_owned();
            let yr = b * xc;
            let mut target = y.fixed_rows_mut::<BLOCK>(r * BLOCK);
            target += yr;
            if r != c {
                let xr = x.fixed_rows::<BLOCK>(r * BLOCK).into_owned();
                let yc = b.transpose() * xr;
                let mut target = y.fixed_rows_mut::<BLOCK>(c * BLOCK);
                target += yc;
            }
        }
        y
    }

    /// Right-looking block Cholesky `A = L Lᵀ` with fill tracked per column.
    pub fn cholesky(&self) -> Result<BlockCholesky, NotPositiveDefinite> {
        let n = self.block_count();
        let mut work = self.columns.clone();
        let mut factor: Vec<Vec<(usize, Matrix6<f64>)>> = Vec::with_capacity(n);
        for k in 0..n {
            let column = std::mem::take(&mut work[k]);
            let pivot = column.get(&k).copied().unwrap_or_else(Matrix6::zeros);
            if !pivot.iter().all(|v| v.is_finite()) {
                return Err(NotPositiveDefinite { block: k });
            }
            let chol = pivot
                .cholesky()
                .ok_or(NotPositiveDefinite { block: k })?;
            let l_kk = chol.l();
            let mut col_factor = Vec::with_capacity(column.len());
            col_factor.push((k, l_kk));
            for (&i, a_ik) in column.range(k + 1..) {
                // L_ik L_kkᵀ = A_ik
                let l_ik_t = l_kk
                    .solve_lower_triangular(&a_ik.transpose())
                    .ok_or(NotPositiveDefinite { block: k })?;
                col_factor.push((i, l_ik_t.transpose()));
            }
            for (a, &(i, ref l_ik)) in col_factor.iter().enumerate().skip(1) {
                for &(j, ref l_jk) in &col_factor[1..=a] {
                    // i >= j because rows are sorted
                    let update = l_ik * l_jk.transpose();
                    *work[j].entry(i).or_insert_with(Matrix6::zeros) -= update;
                }
            }
            factor.push(col_factor);
        }
        Ok(BlockCholesky { columns: factor })
    }
}

/// Lower block-triangular factor; `columns[k][0]` is the diagonal block.
#[derive(Debug, Clone)]
pub struct BlockCholesky {
    columns: Vec<Vec<(usize, Matrix6<f64>)>>,
}

impl BlockCholesky {
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let n = self.columns.len();
        let mut y = rhs.clone();
        // forward: L y = rhs
        for k in 0..n {
            let (_, l_kk) = &self.columns[k][0];
            let yk = l_kk
                .solve_lower_triangular(&y.fixed_rows::<BLOCK>(k * BLOCK).into_owned())
                .unwrap_or_else(Vector6::zeros);
            y.fixed_rows_mut::<BLOCK>(k * BLOCK).copy_from(&yk);
            for (i, l_ik) in &self.columns[k][1..] {
                let delta = l_ik * yk;
                let mut target = y.fixed_rows_mut::<BLOCK>(i * BLOCK);
                target -= delta;
            }
        }
        // backward: Lᵀ x = y
        for k in (0..n).rev() {
            let mut acc = y.fixed_rows::<BLOCK>(k * BLOCK).into_owned();
            for (i, l_ik) in &self.columns[k][1..] {
                acc -= l_ik.transpose() * y.fixed_rows::<BLOCK>(i * BLOCK);
            }
            let (_, l_kk) = &self.columns[k][0];
            let xk = l_kk
                .tr_solve_lower_triangular(&acc)
                .unwrap_or_else(Vector6::zeros);
            y.fixed_rows_mut::<BLOCK>(k * BLOCK).copy_from(&xk);
        }
        y
    }

    pub fn nnz_blocks(&self) -> usize {
        self.columns.iter().map(|c| c.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_block(rng: &mut ChaCha8Rng) -> Matrix6<f64> {
        Matrix6::from_fn(|_, _| rng.random_range(-1.0..1.0))
    }

    /// Random SPD block matrix with a chain-plus-chords sparsity pattern.
    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> BlockSparseMatrix {
        let mut m = BlockSparseMatrix::new(n);
        let mut pairs: Vec<(usize, usize)> = (1..n).map(|k| (k - 1, k)).collect();
        pairs.push((0, n - 1));
        if n > 3 {
            pairs.push((1, 3));
        }
        for (i, j) in pairs {
            // J = [A, B] contributes [AᵀA AᵀB; BᵀA BᵀB]
            let a = random_block(rng);
            let b = random_block(rng);
            m.add(i, i, &(a.transpose() * a));
            m.add(j, j, &(b.transpose() * b));
            m.add(i, j, &(a.transpose() * b));
        }
        for k in 0..n {
            m.add(k, k, &(Matrix6::identity() * 0.1));
        }
        m
    }

    #[test]
    fn identity_solve() {
        let mut m = BlockSparseMatrix::new(1);
        m.set(0, 0, Matrix6::identity());
        let v = DVector::from_fn(6, |i, _| i as f64 - 2.5);
        let x = m.cholesky().unwrap().solve(&v);
        assert_eq!(x, v);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let mut m = BlockSparseMatrix::new(2);
        m.add(0, 0, &Matrix6::identity());
        m.add(1, 1, &Matrix6::identity());
        m.add(0, 1, &-Matrix6::identity());
        assert_eq!(m.cholesky().unwrap_err(), NotPositiveDefinite { block: 1 });
    }

    #[test]
    fn matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for n in [2, 5, 9] {
            let m = random_spd(&mut rng, n);
            let dense = m.to_dense();
            assert!((&dense - dense.transpose()).amax() == 0.0);
            let rhs = DVector::from_fn(m.dim(), |_, _| rng.random_range(-1.0..1.0));
            let x = m.cholesky().unwrap().solve(&rhs);
            let oracle = dense.clone().lu().solve(&rhs).unwrap();
            assert!((&x - &oracle).amax() < 1e-8 * oracle.amax().max(1.0));
            assert!((m.mul_vec(&x) - &rhs).amax() < 1e-8);
            assert!((m.mul_vec(&x) - &dense * &x).amax() < 1e-10);
        }
    }

    #[test]
    fn damping_and_clamping() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = random_spd(&mut rng, 4);
        let d = m.diagonal();
        let damped = m.damped(0.5).diagonal();
        assert!((damped - d * 1.5).amax() < 1e-12);
        m.clamp_to_identity(1);
        let dense = m.to_dense();
        assert_eq!(
            dense.view((6, 0), (6, 24)).into_owned(),
            DMatrix::from_fn(6, 24, |r, c| if c == r + 6 { 1.0 } else { 0.0 })
        );
    }
}
