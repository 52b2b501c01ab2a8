//! Matrix functions and affine-invariant geometry on symmetric positive
//! definite (SPD) matrices.
//!
//! All matrix functions go through a symmetric eigendecomposition
//! `A = V diag(λ) Vᵀ` and act on the eigenvalues. The tangent space at a
//! reference `G` is reached through the whitened logarithm
//! `log(G^{-1/2} R G^{-1/2})`, whose Frobenius norm equals the Riemannian
//! distance between `G` and `R`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Error, Result};

/// Absolute symmetry tolerance for matrices with entries of order one. Larger
/// matrices are checked relative to their largest entry.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Eigenvalues at or below `EIGEN_FLOOR_RATIO * λ_max` are treated as zero.
pub const EIGEN_FLOOR_RATIO: f64 = 1e-12;

const EIGEN_MAX_ITER: usize = 10_000;

fn check_square_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() == 0 || m.nrows() != m.ncols() {
        return invalid(format!(
            "expected a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        ));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return invalid("matrix has non-finite entries");
    }
    Ok(())
}

fn max_asymmetry(m: &DMatrix<f64>) -> (f64, f64) {
    let n = m.nrows();
    let mut worst = 0.0f64;
    let mut scale = 1.0f64;
    for j in 0..n {
        for i in 0..n {
            scale = scale.max(m[(i, j)].abs());
            if i > j {
                worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
    }
    (worst, scale)
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// A dense real symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    /// Validates symmetry and finiteness. The stored matrix is the exact
    /// symmetric part of the input.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square_finite(&m)?;
        let (worst, scale) = max_asymmetry(&m);
        if worst > SYMMETRY_TOLERANCE * scale {
            return invalid(format!("matrix is not symmetric (max |a_ij - a_ji| = {worst:e})"));
        }
        Ok(Self(symmetrize(m)))
    }

    /// Symmetrizes a matrix that is symmetric up to rounding.
    pub(crate) fn from_rounded(m: DMatrix<f64>) -> Self {
        Self(symmetrize(m))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Checks the SPD eigenvalue floor and converts.
    pub fn into_spd(self) -> Result<SpdMatrix> {
        SpdMatrix::new(self.0)
    }
}

/// A dense symmetric positive definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(DMatrix<f64>);

impl SpdMatrix {
    /// Validates symmetry and that every eigenvalue clears the floor
    /// `EIGEN_FLOOR_RATIO * λ_max`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let sym = SymmetricMatrix::new(m)?;
        let eig = sym_eig(&sym)?;
        check_floor(&eig)?;
        Ok(Self(sym.0))
    }

    /// Wraps a matrix produced by an operation that guarantees positive
    /// eigenvalues; only rounding asymmetry is removed.
    pub(crate) fn from_trusted(m: DMatrix<f64>) -> Self {
        Self(symmetrize(m))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn as_symmetric(&self) -> SymmetricMatrix {
        SymmetricMatrix(self.0.clone())
    }

    /// Congruence `A R Aᵀ`; `A` must be square and invertible for the result
    /// to stay SPD.
    pub fn congruence(&self, a: &DMatrix<f64>) -> Result<SpdMatrix> {
        if a.nrows() != self.dim() || a.ncols() != self.dim() {
            return invalid("congruence factor has the wrong shape");
        }
        SpdMatrix::new(symmetrize(a * &self.0 * a.transpose()))
    }
}

/// Eigendecomposition of a symmetric matrix with eigenvalues in descending
/// order and orthonormal eigenvectors stored as columns.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    /// `V diag(f(λ)) Vᵀ`.
    pub fn map_eigenvalues(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.eigenvalues[j]);
        }
        symmetrize(scaled * v.transpose())
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.map_eigenvalues(|l| l)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }
}

/// Symmetric eigendecomposition, eigenvalues sorted in descending order.
pub fn sym_eig(m: &SymmetricMatrix) -> Result<EigenDecomposition> {
    eig_raw(&m.0)
}

fn eig_raw(m: &DMatrix<f64>) -> Result<EigenDecomposition> {
    check_square_finite(m)?;
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, EIGEN_MAX_ITER).ok_or_else(|| {
        Error::NumericalFailure(format!(
            "symmetric eigensolver did not converge within {EIGEN_MAX_ITER} iterations"
        ))
    })?;
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn check_floor(eig: &EigenDecomposition) -> Result<()> {
    let max = eig.max_eigenvalue();
    let min = eig.min_eigenvalue();
    let floor = EIGEN_FLOOR_RATIO * max.max(0.0);
    if max <= 0.0 || min <= floor {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: min,
            floor,
        });
    }
    Ok(())
}

fn spd_eig(r: &SpdMatrix) -> Result<EigenDecomposition> {
    let eig = eig_raw(&r.0)?;
    check_floor(&eig)?;
    Ok(eig)
}

/// Principal matrix logarithm of an SPD matrix.
pub fn matrix_log(r: &SpdMatrix) -> Result<SymmetricMatrix> {
    Ok(SymmetricMatrix(spd_eig(r)?.map_eigenvalues(f64::ln)))
}

/// Matrix exponential of a symmetric matrix.
pub fn matrix_exp(s: &SymmetricMatrix) -> Result<SpdMatrix> {
    let eig = sym_eig(s)?;
    if eig.max_eigenvalue() > f64::MAX.ln() {
        return Err(Error::NumericalFailure(format!(
            "matrix exponential overflows (largest eigenvalue {})",
            eig.max_eigenvalue()
        )));
    }
    Ok(SpdMatrix::from_trusted(eig.map_eigenvalues(f64::exp)))
}

/// `R^{-1/2}`.
pub fn inv_sqrt(r: &SpdMatrix) -> Result<SpdMatrix> {
    Ok(SpdMatrix::from_trusted(spd_eig(r)?.map_eigenvalues(|l| 1.0 / l.sqrt())))
}

/// `R^{1/2}`.
pub fn sqrt(r: &SpdMatrix) -> Result<SpdMatrix> {
    Ok(SpdMatrix::from_trusted(spd_eig(r)?.map_eigenvalues(f64::sqrt)))
}

fn check_same_dim(a: &SpdMatrix, b: &SpdMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return invalid(format!("dimension mismatch: {} vs {}", a.dim(), b.dim()));
    }
    Ok(())
}

fn whiten(w: &SpdMatrix, r: &SpdMatrix) -> SpdMatrix {
    SpdMatrix::from_trusted(&w.0 * &r.0 * &w.0)
}

fn cholesky_factor(m: &SpdMatrix) -> Result<DMatrix<f64>> {
    m.0.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::NumericalFailure("Cholesky factorization failed".into()))
}

fn svd(b: DMatrix<f64>, left: bool) -> Result<nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    b.try_svd(left, false, f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::NumericalFailure("SVD did not converge".into()))
}

/// `log(W R W)` for symmetric `W`, from the SVD `W L_R = U Σ Vᵀ` as
/// `U diag(2 ln σ) Uᵀ`. Working on the factor halves the condition number
/// seen by the decomposition.
fn whitened_log(w: &DMatrix<f64>, r: &SpdMatrix) -> Result<DMatrix<f64>> {
    let f = svd(w * cholesky_factor(r)?, true)?;
    let u = f.u.expect("left singular vectors were requested");
    let mut scaled = u.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= 2.0 * f.singular_values[j].ln();
    }
    Ok(symmetrize(scaled * u.transpose()))
}

/// Affine-invariant Riemannian distance `‖log(R^{-1} S)‖_F`.
///
/// The eigenvalues of `R^{-1} S` are the squared singular values of
/// `L_R^{-1} L_S` (Cholesky factors).
pub fn riemannian_distance(r: &SpdMatrix, s: &SpdMatrix) -> Result<f64> {
    check_same_dim(r, s)?;
    let b = cholesky_factor(r)?
        .solve_lower_triangular(&cholesky_factor(s)?)
        .ok_or_else(|| Error::NumericalFailure("singular Cholesky factor".into()))?;
    let sv = svd(b, false)?.singular_values;
    Ok(sv.iter().map(|v| (2.0 * v.ln()).powi(2)).sum::<f64>().sqrt())
}

fn check_set(set: &[SpdMatrix]) -> Result<usize> {
    let first = set
        .first()
        .ok_or_else(|| Error::InvalidInput("empty matrix set".into()))?;
    if set.iter().any(|m| m.dim() != first.dim()) {
        return invalid("matrix set has mixed dimensions");
    }
    Ok(first.dim())
}

/// Log-Euclidean mean `exp(mean_k log R_k)`.
pub fn log_euclidean_mean(set: &[SpdMatrix]) -> Result<SpdMatrix> {
    let dim = check_set(set)?;
    let mut acc = DMatrix::zeros(dim, dim);
    for r in set {
        acc += matrix_log(r)?.0;
    }
    acc /= set.len() as f64;
    matrix_exp(&SymmetricMatrix::from_rounded(acc))
}

/// Settings for the fixed-point Riemannian (Karcher) mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KarcherOptions {
    /// Stop when the Frobenius norm of the mean tangent vector drops below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for KarcherOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MeanEstimate {
    pub mean: SpdMatrix,
    /// Frobenius norm of the mean tangent vector at `mean`.
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Riemannian mean by plain fixed-point iteration in the tangent space,
/// started from the log-Euclidean mean. On non-convergence the iterate with
/// the smallest gradient norm is returned with `converged == false`.
pub fn riemannian_mean_iterative(set: &[SpdMatrix], opts: KarcherOptions) -> Result<MeanEstimate> {
    let dim = check_set(set)?;
    if !(opts.tol > 0.0) {
        return invalid("tolerance must be positive");
    }
    let mut current = log_euclidean_mean(set)?;
    let mut best: Option<MeanEstimate> = None;
    for iteration in 0..=opts.max_iter {
        let eig = spd_eig(&current)?;
        let w = SpdMatrix::from_trusted(eig.map_eigenvalues(|l| 1.0 / l.sqrt()));
        let mut step = DMatrix::zeros(dim, dim);
        for r in set {
            step += whitened_log(&w.0, r)?;
        }
        step /= set.len() as f64;
        let gradient_norm = step.norm();
        let improved = best.as_ref().is_none_or(|b| gradient_norm < b.gradient_norm);
        if improved {
            best = Some(MeanEstimate {
                mean: current.clone(),
                gradient_norm,
                iterations: iteration,
                converged: gradient_norm < opts.tol,
            });
        }
        if gradient_norm < opts.tol || iteration == opts.max_iter {
            break;
        }
        let half = SpdMatrix::from_trusted(eig.map_eigenvalues(f64::sqrt));
        let exp_step = matrix_exp(&SymmetricMatrix::from_rounded(step))?;
        current = whiten(&half, &exp_step);
    }
    Ok(best.expect("at least one iterate is evaluated"))
}

/// Tangent space at a fixed reference point, with the whitening factor
/// `G^{-1/2}` computed once.
#[derive(Debug, Clone)]
pub struct TangentSpace {
    reference: SpdMatrix,
    whitening: SpdMatrix,
}

impl TangentSpace {
    pub fn new(reference: SpdMatrix) -> Result<Self> {
        let whitening = inv_sqrt(&reference)?;
        Ok(Self { reference, whitening })
    }

    pub fn reference(&self) -> &SpdMatrix {
        &self.reference
    }

    pub fn dim(&self) -> usize {
        self.reference.dim()
    }

    /// `log(G^{-1/2} R G^{-1/2})`.
    pub fn map(&self, r: &SpdMatrix) -> Result<SymmetricMatrix> {
        check_same_dim(&self.reference, r)?;
        Ok(SymmetricMatrix(whitened_log(&self.whitening.0, r)?))
    }

    /// Tangent map followed by half-vectorization.
    pub fn features(&self, r: &SpdMatrix) -> Result<Vec<f64>> {
        Ok(half_vectorize(&self.map(r)?))
    }
}

/// Tangent-space image of `r` at `reference`.
pub fn tangent_map(reference: &SpdMatrix, r: &SpdMatrix) -> Result<SymmetricMatrix> {
    TangentSpace::new(reference.clone())?.map(r)
}

pub fn half_vectorized_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Lower triangle in column-major order, off-diagonal entries scaled by √2
/// so the Euclidean norm of the vector equals the Frobenius norm of `t`.
pub fn half_vectorize(t: &SymmetricMatrix) -> Vec<f64> {
    let n = t.dim();
    let mut out = Vec::with_capacity(half_vectorized_len(n));
    for j in 0..n {
        out.push(t.0[(j, j)]);
        for i in j + 1..n {
            out.push(t.0[(i, j)] * std::f64::consts::SQRT_2);
        }
    }
    out
}

/// Inverse of [`half_vectorize`].
pub fn unvectorize(v: &[f64]) -> Result<SymmetricMatrix> {
    // n(n+1)/2 = len  =>  n = (sqrt(8 len + 1) - 1) / 2
    let n = (((8 * v.len() + 1) as f64).sqrt() as usize).saturating_sub(1) / 2;
    if n == 0 || half_vectorized_len(n) != v.len() {
        return invalid(format!("length {} is not a triangular number", v.len()));
    }
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        m[(j, j)] = v[k];
        k += 1;
        for i in j + 1..n {
            let x = v[k] / std::f64::consts::SQRT_2;
            m[(i, j)] = x;
            m[(j, i)] = x;
            k += 1;
        }
    }
    Ok(SymmetricMatrix(m))
}
