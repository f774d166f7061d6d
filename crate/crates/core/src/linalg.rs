//! Small helpers for complex dense linear algebra on top of `nalgebra`.
//!
//! Matrices are always `DMatrix<Complex64>`; Hermitian eigenproblems go
//! through `SymmetricEigen` with eigenvalues sorted ascending so that every
//! decomposition in the crate is deterministic.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn cre(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// ‖m − m*‖_F, zero iff Hermitian.
pub fn hermitian_residual(m: &CMatrix) -> f64 {
    (m - m.adjoint()).norm()
}

pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues ascending.
/// Returns `(values, vectors)` with `m ≈ vectors · diag(values) · vectors*`.
pub fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let se = hermitize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].total_cmp(&se.eigenvalues[j]));
    let values: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &se.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Operator (spectral) norm via the Hermitian eigenproblem of `m* m`.
pub fn op_norm(m: &CMatrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let gram = m.adjoint() * m;
    let (vals, _) = eigh(&gram);
    vals.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Lower Cholesky factor `l` with `m = l·l*`; fails if not positive definite.
pub fn cholesky_lower(m: &CMatrix) -> Option<CMatrix> {
    nalgebra::Cholesky::new(hermitize(m)).map(|chol| chol.l())
}

/// Orthonormal basis of the range of a Hermitian idempotent (eigenvalue ≈ 1
/// eigenvectors).  Columns of the result span `range(p)`.
pub fn projection_range_basis(p: &CMatrix) -> CMatrix {
    let (vals, vecs) = eigh(p);
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > 0.5).collect();
    let mut basis = CMatrix::zeros(p.nrows(), keep.len());
    for (col, &i) in keep.iter().enumerate() {
        basis.set_column(col, &vecs.column(i));
    }
    basis
}

/// Rank of the span of a family of matrices (all the same shape) in the
/// Frobenius inner product: modified Gram–Schmidt with re-orthogonalization,
/// counting a member as a new direction when its orthogonal residual exceeds
/// `√tol` relative to the family scale.
pub fn span_rank(family: &[CMatrix], tol: f64) -> usize {
    if family.is_empty() {
        return 0;
    }
    let space_dim = family[0].nrows() * family[0].ncols();
    let scale = family.iter().map(|m| m.norm()).fold(0.0f64, f64::max).max(1.0);
    let thr = scale * tol.sqrt().max(1e-12);
    let mut basis: Vec<CMatrix> = Vec::new();
    for m in family {
        if basis.len() == space_dim {
            break;
        }
        let mut v = m.clone();
        for _ in 0..2 {
            for b in &basis {
                let coeff = b.dotc(&v);
                v -= b * coeff;
            }
        }
        let nrm = v.norm();
        if nrm > thr {
            basis.push(v.unscale(nrm));
        }
    }
    basis.len()
}

/// Standard complex Gaussian scalar: real and imaginary parts N(0, 1/2).
pub fn gaussian_c64<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im).scale(std::f64::consts::FRAC_1_SQRT_2)
}

pub fn gaussian_vector<R: Rng>(rng: &mut R, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| gaussian_c64(rng))
}

pub fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| gaussian_c64(rng))
}

/// Haar-ish random unitary from the QR factorization of a Gaussian matrix,
/// with the phase convention that R has positive real diagonal.
pub fn random_unitary<R: Rng>(rng: &mut R, n: usize) -> CMatrix {
    if n == 0 {
        return CMatrix::zeros(0, 0);
    }
    let g = gaussian_matrix(rng, n, n);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        if d.norm() > 0.0 {
            let phase = d / d.norm();
            for i in 0..n {
                q[(i, j)] *= phase;
            }
        }
    }
    q
}

/// Random invertible matrix with condition number at most `cond`, built as
/// U·diag(s)·V with unitary U, V and log-uniform singular values.
pub fn random_well_conditioned<R: Rng>(rng: &mut R, n: usize, cond: f64) -> CMatrix {
    let u = random_unitary(rng, n);
    let v = random_unitary(rng, n);
    let half = cond.max(1.0).sqrt();
    let mut d = CMatrix::zeros(n, n);
    for i in 0..n {
        let t: f64 = rng.random();
        let s = half.powf(2.0 * t - 1.0);
        d[(i, i)] = cre(s);
    }
    u * d * v
}

/// Multiply the vector by a unit phase so its largest-modulus entry is
/// positive real.  Returns the vector unchanged if it is zero.
pub fn canonical_phase(v: &CVector) -> CVector {
    let mut best = 0usize;
    let mut best_norm = 0.0f64;
    for i in 0..v.len() {
        let nrm = v[i].norm();
        if nrm > best_norm {
            best_norm = nrm;
            best = i;
        }
    }
    if best_norm == 0.0 {
        return v.clone();
    }
    let phase = v[best].conj() / best_norm;
    v.map(|x| x * phase)
}

/// Identity matrix shorthand.
pub fn eye(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}
