//! One-sided Jacobi SVD for the small homogeneous least-squares systems used by
//! DLT and triangulation.
//!
//! Only the singular values and right singular vectors are produced; callers
//! want the null-space direction `argmin ‖A x‖` subject to `‖x‖ = 1`, which is
//! the right singular vector paired with the smallest singular value.

use nalgebra::{DMatrix, DVector};

/// Convergence threshold on the normalized column inner products.
pub const JACOBI_TOLERANCE: f64 = 1e-14;

const MAX_SWEEPS: usize = 100;

/// Singular values in descending order with their right singular vectors as
/// the columns of `v`.
#[derive(Debug, Clone)]
pub struct RightSvd {
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
    pub sweeps: usize,
}

impl RightSvd {
    /// Right singular vector of the smallest singular value.
    pub fn null_vector(&self) -> DVector<f64> {
        self.v.column(self.v.ncols() - 1).into_owned()
    }

    pub fn smallest(&self) -> f64 {
        self.singular_values[self.singular_values.len() - 1]
    }

    pub fn largest(&self) -> f64 {
        self.singular_values[0]
    }
}

/// Hestenes one-sided Jacobi SVD.
///
/// Rows are zero-padded when `A` is wide so the right singular vectors still
/// span the full column space.
pub fn jacobi_svd(a: &DMatrix<f64>) -> RightSvd {
    let n = a.ncols();
    let m = a.nrows().max(n);
    let mut u = DMatrix::<f64>::zeros(m, n);
    u.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let mut v = DMatrix::<f64>::identity(n, n);

    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let cp = u.column(p);
                    let cq = u.column(q);
                    (cp.norm_squared(), cq.norm_squared(), cp.dot(&cq))
                };
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= JACOBI_TOLERANCE * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut u, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..n).map(|j| u.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let singular_values = DVector::from_iterator(n, order.iter().map(|&j| norms[j]));
    let mut sorted_v = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        sorted_v.set_column(dst, &v.column(src));
    }
    RightSvd {
        singular_values,
        v: sorted_v,
        sweeps,
    }
}

fn rotate_columns(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for r in 0..m.nrows() {
        let mp = m[(r, p)];
        let mq = m[(r, q)];
        m[(r, p)] = c * mp - s * mq;
        m[(r, q)] = s * mp + c * mq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn matches_nalgebra_singular_values() {
        for (rows, cols, seed) in [(12, 12, 1), (40, 12, 2), (4, 4, 3), (6, 4, 4)] {
            let a = random_matrix(rows, cols, seed);
            let ours = jacobi_svd(&a);
            let mut reference: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
            reference.sort_by(|x, y| y.total_cmp(x));
            for (x, y) in ours.singular_values.iter().zip(reference.iter()) {
                assert!((x - y).abs() < 1e-12 * reference[0], "{x} vs {y}");
            }
        }
    }

    #[test]
    fn right_vectors_are_orthonormal_and_diagonalize() {
        let a = random_matrix(20, 12, 7);
        let svd = jacobi_svd(&a);
        let vtv = svd.v.transpose() * &svd.v;
        assert!((vtv - DMatrix::identity(12, 12)).amax() < 1e-13);
        for j in 0..12 {
            let av = &a * svd.v.column(j);
            assert!((av.norm() - svd.singular_values[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn recovers_exact_null_vector() {
        // Rows orthogonal to x = (1, 2, -1, 0.5) normalized.
        let x = DVector::from_vec(vec![1.0, 2.0, -1.0, 0.5]).normalize();
        let mut a = random_matrix(6, 4, 11);
        for mut row in a.row_iter_mut() {
            let proj = row.dot(&x.transpose());
            row -= proj * x.transpose();
        }
        let svd = jacobi_svd(&a);
        assert!(svd.smallest() < 1e-13);
        let nv = svd.null_vector();
        assert!((nv.dot(&x).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wide_matrix_is_padded() {
        let a = random_matrix(2, 4, 5);
        let svd = jacobi_svd(&a);
        assert_eq!(svd.singular_values.len(), 4);
        assert!(svd.singular_values[2] < 1e-14 && svd.singular_values[3] < 1e-14);
    }
}
