//! Dense Cholesky routines on row-major square matrices.

/// Lower-triangular factor `L` with `L Lᵀ = A`, stored row-major (upper part zero).
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Cholesky {
    /// Factor a symmetric matrix. Only the lower triangle of `a` is read.
    /// Returns `None` when a pivot is not strictly positive.
    pub fn factor(a: &[f64], n: usize) -> Option<Self> {
        debug_assert_eq!(a.len(), n * n);
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let s = a[i * n + j] - dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Some(Cholesky { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factor_matrix(&self) -> &[f64] {
        &self.l
    }

    /// `log det A = 2 Σ log L_ii`
    pub fn log_det(&self) -> f64 {
        (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<f64>() * 2.0
    }

    /// Solves `L z = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut z = vec![0.0; n];
        for i in 0..n {
            let s = b[i] - dot(&self.l[i * n..i * n + i], &z[..i]);
            z[i] = s / self.l[i * n + i];
        }
        z
    }

    /// Solves `Lᵀ x = z`.
    pub fn solve_upper(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = z.to_vec();
        for i in (0..n).rev() {
            x[i] /= self.l[i * n + i];
            let xi = x[i];
            for k in 0..i {
                x[k] -= self.l[i * n + k] * xi;
            }
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// Full symmetric inverse `A⁻¹ = L⁻ᵀ L⁻¹`, row-major.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        // L⁻¹ is lower triangular; build it row by row.
        let mut linv = vec![0.0; n * n];
        for i in 0..n {
            linv[i * n + i] = 1.0 / self.l[i * n + i];
            for j in 0..i {
                let mut s = 0.0;
                for k in j..i {
                    s += self.l[i * n + k] * linv[k * n + j];
                }
                linv[i * n + j] = -s / self.l[i * n + i];
            }
        }
        let mut inv = vec![0.0; n * n];
        for k in 0..n {
            let row = &linv[k * n..k * n + k + 1];
            for i in 0..=k {
                let ri = row[i];
                if ri == 0.0 {
                    continue;
                }
                let dst = &mut inv[i * n..i * n + i + 1];
                for (d, &rj) in dst.iter_mut().zip(&row[..=i]) {
                    *d += ri * rj;
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                inv[j * n + i] = inv[i * n + j];
            }
        }
        inv
    }
}
