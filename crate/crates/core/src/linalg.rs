//! Dense helpers shared by the subspace code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigen-pairs of a symmetric matrix, eigenvalues descending; equal values
/// keep the solver's order.
pub(crate) fn sorted_eigen(g: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}

/// Modified Gram-Schmidt in place. Columns that vanish are replaced by the
/// first standard basis vector that is independent of the earlier ones.
pub(crate) fn orthonormalize(u: &mut DMatrix<f64>) {
    let (q, d) = u.shape();
    let mut next_basis = 0;
    for j in 0..d {
        let mut attempts = 0;
        loop {
            let mut v: DVector<f64> = u.column(j).into_owned();
            let norm0 = v.norm();
            for i in 0..j {
                let p = u.column(i).dot(&v);
                v.axpy(-p, &u.column(i), 1.0);
            }
            let norm = v.norm();
            if norm > 1e-10 * norm0.max(1.0) && norm > 0.0 {
                u.set_column(j, &(v / norm));
                break;
            }
            attempts += 1;
            assert!(attempts <= q + 1, "cannot complete an orthonormal basis");
            let mut e = DVector::zeros(q);
            e[next_basis % q] = 1.0;
            next_basis += 1;
            u.set_column(j, &e);
        }
    }
}

/// Flips each column so that its largest-magnitude entry (first on ties) is positive.
pub(crate) fn fix_signs(u: &mut DMatrix<f64>) {
    for mut col in u.column_iter_mut() {
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col.len() > 0 && col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Top-`d` left singular vectors of `x` (columns are samples) and the
/// corresponding singular values.
pub(crate) fn leading_left_singular(x: &DMatrix<f64>, d: usize) -> (DMatrix<f64>, Vec<f64>) {
    let (q, m) = x.shape();
    let mut u;
    let values: Vec<f64>;
    if m <= q {
        let (ev, v) = sorted_eigen(x.tr_mul(x));
        let s: Vec<f64> = ev.iter().map(|&l| l.max(0.0).sqrt()).collect();
        let smax = s.first().copied().unwrap_or(0.0);
        u = DMatrix::zeros(q, d);
        for j in 0..d {
            // vanishing directions are filled in by orthonormalize
            if s[j] > 1e-12 * smax.max(1e-300) {
                u.set_column(j, &(x * v.column(j) / s[j]));
            }
        }
        values = s[..d].to_vec();
    } else {
        let (ev, w) = sorted_eigen(x * x.transpose());
        u = w.columns(0, d).into_owned();
        values = ev[..d].iter().map(|&l| l.max(0.0).sqrt()).collect();
    }
    orthonormalize(&mut u);
    fix_signs(&mut u);
    (u, values)
}
