//! Orthogonal-factorization least squares with rank diagnostics.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Thin QR factorization of a tall design, checked for full column rank.
///
/// Rank tolerance is `eps * max(rows, cols) * s_max` on the singular values
/// of the triangular factor (which equal those of the design).
#[derive(Debug, Clone)]
pub struct QrSolver {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    condition: f64,
}

impl QrSolver {
    /// Factor `x`. `names` label the columns in rank diagnostics.
    pub fn new(x: &DMatrix<f64>, names: &[String]) -> Result<Self> {
        let (rows, k) = x.shape();
        if k == 0 {
            return Ok(QrSolver {
                q: DMatrix::zeros(rows, 0),
                r: DMatrix::zeros(0, 0),
                condition: 1.0,
            });
        }
        if rows < k {
            return Err(Error::RankDeficient {
                rank: rows,
                k,
                condition: f64::INFINITY,
                columns: names.to_vec(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("design contains non-finite values".into()));
        }
        let qr = x.clone().qr();
        let r = qr.r();
        let q = qr.q();

        let svd = r.clone().svd(false, true);
        let s = &svd.singular_values;
        let s_max = s.max();
        let s_min = s.min();
        let tol = f64::EPSILON * rows.max(k) as f64 * s_max;
        let rank = s.iter().filter(|&&v| v > tol).count();
        let condition = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
        if rank < k || s_max == 0.0 {
            let columns = collinear_columns(&svd, tol, names);
            return Err(Error::RankDeficient {
                rank,
                k,
                condition,
                columns,
            });
        }
        Ok(QrSolver { q, r, condition })
    }

    pub fn ncols(&self) -> usize {
        self.r.ncols()
    }

    pub fn condition_number(&self) -> f64 {
        self.condition
    }

    /// Least-squares coefficients for one right-hand side.
    pub fn solve(&self, y: &DVector<f64>) -> DVector<f64> {
        let k = self.ncols();
        if k == 0 {
            return DVector::zeros(0);
        }
        let qty = self.q.tr_mul(y);
        self.r
            .solve_upper_triangular(&qty)
            .expect("triangular factor verified nonsingular")
    }

    /// Least-squares coefficients for each column of `y`.
    pub fn solve_many(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let k = self.ncols();
        if k == 0 {
            return DMatrix::zeros(0, y.ncols());
        }
        let qty = self.q.tr_mul(y);
        self.r
            .solve_upper_triangular(&qty)
            .expect("triangular factor verified nonsingular")
    }

    /// `(X'X)^{-1} = R^{-1} R^{-T}`.
    pub fn xtx_inverse(&self) -> DMatrix<f64> {
        let k = self.ncols();
        if k == 0 {
            return DMatrix::zeros(0, 0);
        }
        let rinv = self
            .r
            .solve_upper_triangular(&DMatrix::identity(k, k))
            .expect("triangular factor verified nonsingular");
        &rinv * rinv.transpose()
    }
}

// Columns carrying weight in the right singular vectors of the null directions.
fn collinear_columns(svd: &nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>, tol: f64, names: &[String]) -> Vec<String> {
    let Some(vt) = svd.v_t.as_ref() else {
        return names.to_vec();
    };
    let mut flagged = vec![false; vt.ncols()];
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= tol {
            let row = vt.row(i);
            let peak = row.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            for (j, v) in row.iter().enumerate() {
                if v.abs() >= 0.1 * peak {
                    flagged[j] = true;
                }
            }
        }
    }
    flagged
        .iter()
        .enumerate()
        .filter(|(_, &f)| f)
        .map(|(j, _)| names.get(j).cloned().unwrap_or_else(|| format!("x{j}")))
        .collect()
}

/// Solve a small symmetric positive-definite system by Cholesky, returning
/// `None` when the matrix is not numerically positive definite relative to
/// its own scale.
pub(crate) fn spd_solve(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let k = gram.nrows();
    if k == 0 {
        return Some(DVector::zeros(0));
    }
    let scale = gram.diagonal().max();
    if !(scale > 0.0) {
        return None;
    }
    let chol = gram.clone().cholesky()?;
    let l = chol.l();
    let dmin = l.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v * v));
    if dmin <= f64::EPSILON * 1e3 * k as f64 * scale {
        return None;
    }
    Some(chol.solve(rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|j| format!("c{j}")).collect()
    }

    #[test]
    fn exact_solution_recovered() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, -1.0]);
        let beta = DVector::from_vec(vec![3.0, -2.0]);
        let y = &x * &beta;
        let qr = QrSolver::new(&x, &names(2)).unwrap();
        let b = qr.solve(&y);
        assert!((b - beta).amax() < 1e-12);
    }

    #[test]
    fn collinear_columns_reported() {
        let x = DMatrix::from_row_slice(4, 3, &[
            1.0, 2.0, 0.5, //
            2.0, 4.0, -1.0, //
            3.0, 6.0, 2.0, //
            4.0, 8.0, 0.0,
        ]);
        let err = QrSolver::new(&x, &names(3)).unwrap_err();
        match err {
            Error::RankDeficient { rank, columns, .. } => {
                assert_eq!(rank, 2);
                assert!(columns.contains(&"c0".to_string()));
                assert!(columns.contains(&"c1".to_string()));
                assert!(!columns.contains(&"c2".to_string()));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn xtx_inverse_matches_direct_inverse() {
        let x = DMatrix::from_row_slice(5, 2, &[1.0, 0.3, -0.4, 1.0, 2.0, 0.1, 0.5, -1.5, 0.0, 0.7]);
        let qr = QrSolver::new(&x, &names(2)).unwrap();
        let direct = (x.transpose() * &x).try_inverse().unwrap();
        assert!((qr.xtx_inverse() - direct).amax() < 1e-12);
    }

    #[test]
    fn spd_solve_rejects_singular() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(spd_solve(&g, &DVector::from_vec(vec![1.0, 1.0])).is_none());
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let x = spd_solve(&g, &DVector::from_vec(vec![1.0, 2.0])).unwrap();
        assert!((&g * x - DVector::from_vec(vec![1.0, 2.0])).amax() < 1e-12);
    }
}
