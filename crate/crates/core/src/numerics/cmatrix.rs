//! Dense complex matrices (row-major) and an LU solver with partial
//! pivoting, shared by the matrix exponential and the eigensolver.

use num_complex::Complex64 as C64;
use std::ops::{Index, IndexMut};

use super::NumericsError;

/// Square dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    n: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "matrix dimension must be at least 1");
        Self { n, data: vec![C64::new(0.0, 0.0); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_rows(rows: &[&[C64]]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n);
            for (j, &x) in row.iter().enumerate() {
                m[(i, j)] = x;
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![C64::new(0.0, 0.0); self.n];
        for i in 0..self.n {
            let mut acc = C64::new(0.0, 0.0);
            let row = self.row(i);
            for j in 0..self.n {
                acc += row[j] * x[j];
            }
            y[i] = acc;
        }
        y
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                let orow = other.row(k);
                let out_row = &mut out.data[i * n..(i + 1) * n];
                for j in 0..n {
                    out_row[j] += a * orow[j];
                }
            }
        }
        out
    }

    pub fn scaled(&self, f: C64) -> Self {
        let mut m = self.clone();
        for x in &mut m.data {
            *x *= f;
        }
        m
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let mut m = self.clone();
        for (x, y) in m.data.iter_mut().zip(&other.data) {
            *x += y;
        }
        m
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let mut m = self.clone();
        for (x, y) in m.data.iter_mut().zip(&other.data) {
            *x -= y;
        }
        m
    }

    /// Max row sum of absolute values (operator infinity norm).
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|x| x.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest |a_ij|.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.re.is_finite() && x.im.is_finite())
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.n + j]
    }
}

/// LU decomposition with partial pivoting.
pub struct Lu {
    n: usize,
    lu: Vec<C64>,
    pivots: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &ComplexMatrix) -> Result<Self, NumericsError> {
        let n = a.dim();
        let mut lu = a.data().to_vec();
        let mut pivots = vec![0usize; n];
        for k in 0..n {
            let mut pmax = lu[k * n + k].norm();
            let mut prow = k;
            for i in (k + 1)..n {
                let m = lu[i * n + k].norm();
                if m > pmax {
                    pmax = m;
                    prow = i;
                }
            }
            if pmax == 0.0 {
                return Err(NumericsError::SingularMatrix);
            }
            pivots[k] = prow;
            if prow != k {
                for j in 0..n {
                    lu.swap(k * n + j, prow * n + j);
                }
            }
            let diag = lu[k * n + k];
            for i in (k + 1)..n {
                let f = lu[i * n + k] / diag;
                lu[i * n + k] = f;
                for j in (k + 1)..n {
                    let sub = f * lu[k * n + j];
                    lu[i * n + j] -= sub;
                }
            }
        }
        Ok(Self { n, lu, pivots })
    }

    pub fn solve_in_place(&self, b: &mut [C64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        // the factorization swaps whole rows (P A = L U with L in final row
        // order), so the permutation must be applied in full before the
        // forward pass
        for k in 0..n {
            b.swap(k, self.pivots[k]);
        }
        for k in 0..n {
            for i in (k + 1)..n {
                let sub = self.lu[i * n + k] * b[k];
                b[i] -= sub;
            }
        }
        for k in (0..n).rev() {
            b[k] /= self.lu[k * n + k];
            for i in 0..k {
                let sub = self.lu[i * n + k] * b[k];
                b[i] -= sub;
            }
        }
    }

    /// Raw factorization storage and pivot sequence (diagnostics/tests).
    pub fn storage(&self) -> (&[C64], &[usize]) {
        (&self.lu, &self.pivots)
    }

    /// Solve A X = B for a full right-hand-side matrix.
    pub fn solve_matrix(&self, b: &ComplexMatrix) -> ComplexMatrix {
        let n = self.n;
        let mut out = ComplexMatrix::zeros(n);
        let mut col = vec![C64::new(0.0, 0.0); n];
        for j in 0..n {
            for i in 0..n {
                col[i] = b[(i, j)];
            }
            self.solve_in_place(&mut col);
            for i in 0..n {
                out[(i, j)] = col[i];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn lu_solves_small_system() {
        let a = ComplexMatrix::from_rows(&[
            &[c(2.0, 1.0), c(1.0, 0.0)],
            &[c(0.0, -1.0), c(3.0, 0.0)],
        ]);
        let x = vec![c(1.0, 2.0), c(-0.5, 0.25)];
        let mut b = a.matvec(&x);
        Lu::factor(&a).unwrap().solve_in_place(&mut b);
        for (got, want) in b.iter().zip(&x) {
            assert!((got - want).norm() < 1e-13);
        }
    }

    #[test]
    fn solve_with_nontrivial_pivoting() {
        // small leading entries force row interchanges at every step
        let a = ComplexMatrix::from_rows(&[
            &[c(1e-8, 0.0), c(1.0, 0.0), c(2.0, 0.0)],
            &[c(3.0, 0.0), c(1e-8, 0.0), c(1.0, 0.0)],
            &[c(1.0, 0.5), c(2.0, 0.0), c(1e-8, 0.0)],
        ]);
        let lu = Lu::factor(&a).unwrap();
        let inv = lu.solve_matrix(&ComplexMatrix::identity(3));
        let defect = a.matmul(&inv).sub(&ComplexMatrix::identity(3)).norm_inf();
        assert!(defect < 1e-12, "A inv(A) defect {defect}");
    }

    #[test]
    fn inverse_of_random_matrices() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let n = rng.gen_range(2..=12);
            let mut a = ComplexMatrix::zeros(n);
            for i in 0..n {
                for j in 0..n {
                    a[(i, j)] = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                }
            }
            let lu = match Lu::factor(&a) {
                Ok(lu) => lu,
                Err(_) => continue,
            };
            let inv = lu.solve_matrix(&ComplexMatrix::identity(n));
            let defect = a.matmul(&inv).sub(&ComplexMatrix::identity(n)).norm_inf();
            assert!(defect < 1e-10, "n={n}: defect {defect}");
        }
    }

    #[test]
    fn singular_matrix_is_detected() {
        let a = ComplexMatrix::zeros(3);
        assert!(matches!(Lu::factor(&a), Err(NumericsError::SingularMatrix)));
    }

    #[test]
    fn matmul_against_hand_result() {
        let a = ComplexMatrix::from_rows(&[&[c(1.0, 0.0), c(0.0, 1.0)], &[c(2.0, 0.0), c(0.0, 0.0)]]);
        let b = ComplexMatrix::from_rows(&[&[c(0.0, 1.0), c(1.0, 0.0)], &[c(1.0, 0.0), c(0.0, -1.0)]]);
        let p = a.matmul(&b);
        assert!((p[(0, 0)] - c(0.0, 2.0)).norm() < 1e-15);
        assert!((p[(0, 1)] - c(2.0, 0.0)).norm() < 1e-15);
        assert!((p[(1, 0)] - c(0.0, 2.0)).norm() < 1e-15);
        assert!((p[(1, 1)] - c(2.0, 0.0)).norm() < 1e-15);
    }
}
