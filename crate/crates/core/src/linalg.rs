use nalgebra::Cholesky;

use crate::model::{Matrix, Vector};

/// Minimum-norm least-squares solution of `a X ≈ b` and the numerical rank
/// of `a`.
///
/// Householder QR with column pivoting, `a P = Q R`. Diagonal entries of `R`
/// below `max(m, n) · |r_11| · ε` count as zero. A full-rank problem is
/// solved by back substitution; otherwise the leading rows `R_1` are reduced
/// once more, `R_1ᵀ = Z T`, and the minimum-norm solution is `P Z T⁻ᵀ Qᵀb`.
pub(crate) fn lstsq(a: &Matrix, b: &Matrix) -> (Matrix, usize) {
    let (m, n) = a.shape();
    let zero = (Matrix::zeros(n, b.ncols()), 0);
    if m == 0 || n == 0 {
        return zero;
    }
    let qr = a.clone().col_piv_qr();
    let r = qr.r();
    let c = qr.q().transpose() * b;
    let lead = r[(0, 0)].abs();
    if lead == 0.0 {
        return zero;
    }
    let tol = (m.max(n) as f64) * lead * f64::EPSILON;
    let rank = (0..r.nrows()).take_while(|&i| r[(i, i)].abs() > tol).count();
    let c1 = c.rows(0, rank).into_owned();
    let mut w = if rank == n {
        r.view((0, 0), (n, n))
            .solve_upper_triangular(&c1)
            .expect("diagonal is non-zero up to the rank")
    } else {
        let cod = r.rows(0, rank).transpose().qr();
        let t = cod.r();
        let v = t
            .transpose()
            .solve_lower_triangular(&c1)
            .expect("diagonal is non-zero up to the rank");
        cod.q() * v
    };
    qr.p().inv_permute_rows(&mut w);
    (w, rank)
}

pub(crate) fn lstsq_vec(a: &Matrix, b: &Vector) -> (Vector, usize) {
    let (x, rank) = lstsq(a, &Matrix::from_column_slice(b.len(), 1, b.as_slice()));
    (x.column(0).into_owned(), rank)
}

/// Solve a small symmetric positive semi-definite system; falls back to the
/// pseudo-inverse when Cholesky fails.
pub(crate) fn solve_psd(h: &Matrix, rhs: &Matrix) -> Matrix {
    match Cholesky::new(h.clone()) {
        Some(ch) => ch.solve(rhs),
        None => lstsq(h, rhs).0,
    }
}
