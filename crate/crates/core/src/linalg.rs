//! Small complex-Hermitian linear algebra helpers shared across modules.
//!
//! Everything here operates on `nalgebra` dynamic matrices over `Complex<f64>`.
//! The one non-textbook routine is [`psd_factor`], a pivoted Cholesky that
//! produces a thin factor `V` with `V Vᴴ ≈ R` for positive-semidefinite `R`,
//! truncating directions whose residual power falls below a relative
//! tolerance. Correlated channel vectors are drawn through that factor.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// trace(a · b) in O(n²), without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    assert_eq!(a.ncols(), b.nrows(), "trace_product: inner dimensions");
    assert_eq!(a.nrows(), b.ncols(), "trace_product: outer dimensions");
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..b.ncols() {
        for i in 0..b.nrows() {
            // (a b)_jj summed over j equals sum_{i,j} a[j,i] b[i,j]
            acc += a[(j, i)] * b[(i, j)];
        }
    }
    acc
}

/// trace(a · b) for Hermitian `a` and `b`: the real Frobenius inner product
/// `sum_ij a_ij conj(b_ij)`, evaluated with cache-friendly sequential
/// access.
pub fn hermitian_trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "hermitian_trace_product: shapes");
    let mut acc = 0.0f64;
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        acc += x.re * y.re + x.im * y.im;
    }
    acc
}

/// Gram matrix `Wᴴ W`, computing the lower triangle once and mirroring.
pub fn gram(w: &CMatrix) -> CMatrix {
    let n = w.ncols();
    let mut out = CMatrix::zeros(n, n);
    for j in 0..n {
        let col_j = w.column(j);
        for i in j..n {
            let v = w.column(i).dotc(&col_j); // entry (i, j) = col_iᴴ col_j
            out[(i, j)] = v;
            if i != j {
                out[(j, i)] = v.conj();
            }
        }
    }
    out
}

/// Complex Frobenius inner product `sum_ij conj(a_ij) b_ij = tr(aᴴ b)`.
pub fn frobenius_inner(a: &CMatrix, b: &CMatrix) -> C64 {
    assert_eq!(a.shape(), b.shape(), "frobenius_inner: shapes");
    let mut acc = C64::new(0.0, 0.0);
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        acc += x.conj() * y;
    }
    acc
}

/// Maximum elementwise deviation from Hermitian symmetry.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in i..a.ncols() {
            let d = (a[(i, j)] - a[(j, i)].conj()).norm();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

pub fn is_hermitian(a: &CMatrix, tol: f64) -> bool {
    a.is_square() && hermitian_defect(a) <= tol
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

/// Thin factor `V` (n × rank) of a Hermitian PSD matrix with `V Vᴴ ≈ a`.
///
/// Pivoted Cholesky: pivots on the largest residual diagonal and stops once
/// every remaining diagonal falls below `rel_tol · trace(a)`. For a PSD input
/// the truncation error is a matrix whose trace is at most `n · rel_tol ·
/// trace(a)`.
pub fn psd_factor(a: &CMatrix, rel_tol: f64) -> CMatrix {
    assert!(a.is_square(), "psd_factor: square matrix required");
    let n = a.nrows();
    let trace: f64 = (0..n).map(|i| a[(i, i)].re).sum();
    let tol = rel_tol * trace.max(0.0);

    // Residual diagonal and the pivot permutation. `rows[i]` holds the first
    // `rank` entries of row perm[i] of the permuted factor.
    let mut diag: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rows: Vec<Vec<C64>> = vec![Vec::new(); n];
    let mut rank = 0usize;

    for j in 0..n {
        let (p_rel, &dmax) = diag[j..]
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())
            .unwrap();
        if dmax <= tol || dmax <= 0.0 {
            break;
        }
        let p = j + p_rel;
        diag.swap(j, p);
        perm.swap(j, p);
        rows.swap(j, p);

        let pivot = dmax.sqrt();
        rows[j].push(C64::new(pivot, 0.0));
        for i in (j + 1)..n {
            let mut v = a[(perm[i], perm[j])];
            for s in 0..j {
                v -= rows[i][s] * rows[j][s].conj();
            }
            let lij = v / pivot;
            diag[i] -= lij.norm_sqr();
            rows[i].push(lij);
        }
        rank = j + 1;
    }

    let mut factor = CMatrix::zeros(n, rank);
    for (permuted_row, original_row) in perm.iter().enumerate() {
        for (s, &value) in rows[permuted_row].iter().enumerate() {
            // Row j of the permuted factor only has entries up to column j.
            if s <= permuted_row {
                factor[(*original_row, s)] = value;
            }
        }
    }
    factor
}

/// Draws a circularly-symmetric complex Gaussian vector CN(0, variance · I).
pub fn complex_gaussian_vector<R: Rng + ?Sized>(n: usize, variance: f64, rng: &mut R) -> CVector {
    let scale = (variance / 2.0).sqrt();
    CVector::from_fn(n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(scale * re, scale * im)
    })
}

/// Real part of a value expected to be real, erroring if the imaginary
/// residue exceeds `rel_tol` relative to the magnitude.
pub fn expect_real(z: C64, rel_tol: f64) -> Result<f64, crate::error::NumericsError> {
    let scale = z.norm().max(f64::MIN_POSITIVE);
    if z.im.abs() > rel_tol * scale {
        return Err(crate::error::NumericsError::Numerical(format!(
            "imaginary residue {} exceeds tolerance on value {}",
            z.im, z.re
        )));
    }
    Ok(z.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn random_psd(n: usize, rank: usize, rng: &mut ChaCha12Rng) -> CMatrix {
        let g = CMatrix::from_fn(n, rank, |_, _| {
            C64::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            )
        });
        &g * g.adjoint()
    }

    #[test]
    fn trace_product_matches_full_product() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let a = random_psd(5, 5, &mut rng);
        let b = random_psd(5, 5, &mut rng);
        let direct = (&a * &b).trace();
        let fast = trace_product(&a, &b);
        assert!((direct - fast).norm() <= 1e-12 * direct.norm());
        let hermitian = hermitian_trace_product(&a, &b);
        assert!((direct.re - hermitian).abs() <= 1e-12 * direct.re.abs());
    }

    #[test]
    fn psd_factor_reconstructs_full_rank() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let a = random_psd(12, 12, &mut rng);
        let v = psd_factor(&a, 1e-12);
        assert_eq!(v.ncols(), 12);
        let err = (&v * v.adjoint() - &a).norm() / a.norm();
        assert!(err < 1e-10, "reconstruction error {err}");
    }

    #[test]
    fn psd_factor_detects_low_rank() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let a = random_psd(20, 4, &mut rng);
        let v = psd_factor(&a, 1e-12);
        assert_eq!(v.ncols(), 4);
        let err = (&v * v.adjoint() - &a).norm() / a.norm();
        assert!(err < 1e-9, "reconstruction error {err}");
    }

    #[test]
    fn psd_factor_zero_matrix_is_empty() {
        let a = CMatrix::zeros(6, 6);
        let v = psd_factor(&a, 1e-12);
        assert_eq!(v.ncols(), 0);
    }

    #[test]
    fn gaussian_vector_unit_variance() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let n = 4;
        let draws = 100_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            acc += complex_gaussian_vector(n, 1.0, &mut rng).norm_squared();
        }
        let mean = acc / (draws * n) as f64;
        assert!((mean - 1.0).abs() < 0.02, "per-entry variance {mean}");
    }
}
