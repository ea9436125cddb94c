//! Rank-aware dense linear algebra.
//!
//! Every rank decision in the crate goes through the singular value
//! decomposition and a single [`Tolerance`]: a singular value counts as zero
//! when it is at most `rel_rank_tol * sigma_max`. Equality and membership
//! tests return a [`Check`] carrying the relative residual, so callers can
//! look at margins rather than just booleans.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub const DEFAULT_REL_RANK_TOL: f64 = 1e-10;
pub const DEFAULT_ABS_RESIDUAL_TOL: f64 = 1e-8;

/// Numerical policy shared by all rank, equality and membership tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    rel_rank_tol: f64,
    abs_residual_tol: f64,
}

impl Tolerance {
    pub fn new(rel_rank_tol: f64, abs_residual_tol: f64) -> Result<Self> {
        if !(rel_rank_tol > 0.0 && rel_rank_tol < 1.0) {
            return Err(Error::InvalidTolerance(format!(
                "rel_rank_tol must lie in (0, 1), got {rel_rank_tol}"
            )));
        }
        if !(abs_residual_tol > 0.0 && abs_residual_tol.is_finite()) {
            return Err(Error::InvalidTolerance(format!(
                "abs_residual_tol must be positive, got {abs_residual_tol}"
            )));
        }
        Ok(Tolerance {
            rel_rank_tol,
            abs_residual_tol,
        })
    }

    pub fn rel_rank_tol(&self) -> f64 {
        self.rel_rank_tol
    }

    pub fn abs_residual_tol(&self) -> f64 {
        self.abs_residual_tol
    }

    /// `residual <= abs_residual_tol`.
    pub fn accepts(&self, residual: f64) -> bool {
        residual <= self.abs_residual_tol
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            rel_rank_tol: DEFAULT_REL_RANK_TOL,
            abs_residual_tol: DEFAULT_ABS_RESIDUAL_TOL,
        }
    }
}

/// Outcome of a tolerance-based predicate. `residual` is always relative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub holds: bool,
    pub residual: f64,
}

impl Check {
    pub fn new(residual: f64, tol: &Tolerance) -> Self {
        Check {
            holds: tol.accepts(residual),
            residual,
        }
    }

    /// Conjunction; the residual is the worst of the two.
    pub fn and(self, other: Check) -> Check {
        Check {
            holds: self.holds && other.holds,
            residual: self.residual.max(other.residual),
        }
    }
}

/// Orthonormal basis of a subspace of `R^ambient_dim`, one vector per column.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    basis: Matrix,
}

impl SubspaceBasis {
    fn from_columns(ambient_dim: usize, columns: Vec<Vector>) -> Self {
        let basis = if columns.is_empty() {
            Matrix::zeros(ambient_dim, 0)
        } else {
            Matrix::from_columns(&columns)
        };
        SubspaceBasis { basis }
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn into_matrix(self) -> Matrix {
        self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Orthogonal projector onto the subspace.
    pub fn projector(&self) -> Matrix {
        &self.basis * self.basis.transpose()
    }
}

pub(crate) fn ensure_finite(a: &Matrix, what: &'static str) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn ensure_finite_vec(v: &Vector, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn ensure_shape(
    a: &Matrix,
    rows: usize,
    cols: usize,
    context: &'static str,
) -> Result<()> {
    if a.shape() == (rows, cols) {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected: (rows, cols),
            found: a.shape(),
        })
    }
}

/// Thin SVD with singular values sorted in decreasing order.
struct SortedSvd {
    u: Matrix,
    singular_values: Vec<f64>,
    v: Matrix,
}

impl SortedSvd {
    fn new(a: &Matrix) -> Result<Self> {
        let (rows, cols) = a.shape();
        let k = rows.min(cols);
        if k == 0 {
            return Ok(SortedSvd {
                u: Matrix::zeros(rows, 0),
                singular_values: Vec::new(),
                v: Matrix::zeros(cols, 0),
            });
        }
        let svd = faer::Mat::<f64>::from_fn(rows, cols, |i, j| a[(i, j)])
            .thin_svd()
            .map_err(|_| Error::Decomposition("singular value decomposition"))?;
        let (fu, fs, fv) = (svd.U(), svd.S().column_vector(), svd.V());
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&i, &j| fs[j].partial_cmp(&fs[i]).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j)));
        Ok(SortedSvd {
            u: Matrix::from_fn(rows, k, |r, c| fu[(r, order[c])]),
            singular_values: order.iter().map(|&i| fs[i]).collect(),
            v: Matrix::from_fn(cols, k, |r, c| fv[(r, order[c])]),
        })
    }

    fn threshold(&self, tol: &Tolerance) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0) * tol.rel_rank_tol()
    }

    fn rank(&self, tol: &Tolerance) -> usize {
        let thr = self.threshold(tol);
        self.singular_values.iter().filter(|&&s| s > thr).count()
    }
}

/// Flip the sign of `v` so its largest-magnitude entry is positive.
fn canonical_sign(mut v: Vector) -> Vector {
    let mut best = 0.0_f64;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best + 1e-12 {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.neg_mut();
    }
    v
}

/// Moore–Penrose pseudoinverse via the SVD, zeroing singular values at or
/// below `rel_rank_tol * sigma_max`.
pub fn pinv(a: &Matrix, tol: &Tolerance) -> Result<Matrix> {
    ensure_finite(a, "pseudoinverse input")?;
    let svd = SortedSvd::new(a)?;
    let r = svd.rank(tol);
    let mut out = Matrix::zeros(a.ncols(), a.nrows());
    for i in 0..r {
        let s_inv = 1.0 / svd.singular_values[i];
        out += svd.v.column(i) * svd.u.column(i).transpose() * s_inv;
    }
    Ok(out)
}

/// Numerical rank: the number of singular values above `rel_rank_tol * sigma_max`.
pub fn rank_of(a: &Matrix, tol: &Tolerance) -> Result<usize> {
    ensure_finite(a, "rank input")?;
    Ok(SortedSvd::new(a)?.rank(tol))
}

/// Rank with singular values at or below `rel_rank_tol * max(sigma_max, scale)`
/// discarded. For a matrix derived from a larger one, `scale` is the size of
/// that source, so rounding residue is not mistaken for rank.
pub fn rank_relative_to(a: &Matrix, scale: f64, tol: &Tolerance) -> Result<usize> {
    ensure_finite(a, "rank input")?;
    let svd = SortedSvd::new(a)?;
    let thr = svd.threshold(tol).max(scale.abs() * tol.rel_rank_tol());
    Ok(svd.singular_values.iter().filter(|&&s| s > thr).count())
}

/// Singular values in decreasing order.
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    ensure_finite(a, "singular value input")?;
    Ok(SortedSvd::new(a)?.singular_values)
}

/// Orthogonal projector `A A⁺` onto the image of `A`.
pub fn image_projector(a: &Matrix, tol: &Tolerance) -> Result<Matrix> {
    Ok(image_basis(a, tol)?.projector())
}

/// Is `v` in the image of `A`? The residual is `‖AA⁺v − v‖ / max(1, ‖v‖)`.
pub fn in_image(v: &Vector, a: &Matrix, tol: &Tolerance) -> Result<Check> {
    if v.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            context: "image membership",
            expected: (a.nrows(), 1),
            found: (v.len(), 1),
        });
    }
    ensure_finite_vec(v, "image membership vector")?;
    let p = image_projector(a, tol)?;
    let residual = (&p * v - v).norm() / v.norm().max(1.0);
    Ok(Check::new(residual, tol))
}

/// Orthonormal basis of `ker A`, ordered by the SVD.
pub fn kernel_basis(a: &Matrix, tol: &Tolerance) -> Result<SubspaceBasis> {
    ensure_finite(a, "kernel input")?;
    let (rows, cols) = a.shape();
    // Pad with zero rows so the thin SVD returns a full set of right vectors.
    let padded = if rows < cols {
        let mut p = Matrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = SortedSvd::new(&padded)?;
    let r = svd.rank(tol);
    let columns = (r..cols)
        .map(|i| canonical_sign(svd.v.column(i).into_owned()))
        .collect();
    Ok(SubspaceBasis::from_columns(cols, columns))
}

/// Orthonormal basis of `Im A`, ordered by the SVD.
pub fn image_basis(a: &Matrix, tol: &Tolerance) -> Result<SubspaceBasis> {
    ensure_finite(a, "image input")?;
    let svd = SortedSvd::new(a)?;
    let r = svd.rank(tol);
    let columns = (0..r)
        .map(|i| canonical_sign(svd.u.column(i).into_owned()))
        .collect();
    Ok(SubspaceBasis::from_columns(a.nrows(), columns))
}

/// Orthonormal bases `(Ξ, Z)` of `ker U` and `ker Uᵀ` for square `U`, taken
/// from the same decomposition so both have the same dimension.
pub fn kernel_pair(u: &Matrix, tol: &Tolerance) -> Result<(SubspaceBasis, SubspaceBasis)> {
    if !u.is_square() {
        return Err(Error::NotSquare("kernel pair input"));
    }
    ensure_finite(u, "kernel pair input")?;
    let n = u.nrows();
    let svd = SortedSvd::new(u)?;
    let r = svd.rank(tol);
    let xi = (r..n)
        .map(|i| canonical_sign(svd.v.column(i).into_owned()))
        .collect();
    let zeta = (r..n)
        .map(|i| canonical_sign(svd.u.column(i).into_owned()))
        .collect();
    Ok((
        SubspaceBasis::from_columns(n, xi),
        SubspaceBasis::from_columns(n, zeta),
    ))
}

/// `Im(image_of) ∩ ker(kernel_of) = {0}`, decided as
/// `rank(kernel_of · image_of) == rank(image_of)`.
pub fn trivial_intersection(image_of: &Matrix, kernel_of: &Matrix, tol: &Tolerance) -> Result<bool> {
    Ok(intersection_deficit(image_of, kernel_of, tol)? == 0)
}

/// `dim(Im A ∩ ker B) = rank(A) − rank(BA)`.
pub fn intersection_deficit(image_of: &Matrix, kernel_of: &Matrix, tol: &Tolerance) -> Result<usize> {
    if kernel_of.ncols() != image_of.nrows() {
        return Err(Error::DimensionMismatch {
            context: "subspace intersection",
            expected: (kernel_of.nrows(), image_of.nrows()),
            found: kernel_of.shape(),
        });
    }
    let ra = rank_of(image_of, tol)?;
    let rba = rank_of(&(kernel_of * image_of), tol)?;
    Ok(ra.saturating_sub(rba))
}

/// Symmetrize `s` as `(S + Sᵀ)/2`, refusing materially asymmetric input.
pub fn symmetrize(s: &Matrix, what: &'static str, tol: &Tolerance) -> Result<Matrix> {
    if !s.is_square() {
        return Err(Error::NotSquare(what));
    }
    ensure_finite(s, what)?;
    let residual = (s - s.transpose()).norm() / s.norm().max(1.0);
    if !tol.accepts(residual) {
        return Err(Error::NotSymmetric { what, residual });
    }
    Ok((s + s.transpose()) * 0.5)
}

/// Eigendecomposition of a symmetric PSD matrix with eigenvalues in the band
/// `[-abs_residual_tol * scale, 0)` clipped to zero; anything below errors.
pub(crate) struct PsdEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
    pub clipped: bool,
}

pub(crate) fn psd_eigen(s: &Matrix, what: &'static str, tol: &Tolerance) -> Result<PsdEigen> {
    let sym = symmetrize(s, what, tol)?;
    let n = sym.nrows();
    if n == 0 {
        return Ok(PsdEigen {
            values: Vec::new(),
            vectors: Matrix::zeros(0, 0),
            clipped: false,
        });
    }
    let eig = sym.symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(1.0);
    let mut clipped = false;
    let mut values = Vec::with_capacity(n);
    for &lambda in eig.eigenvalues.iter() {
        if lambda < -tol.abs_residual_tol() * scale {
            return Err(Error::NotPositiveSemidefinite {
                what,
                eigenvalue: lambda,
            });
        }
        if lambda < 0.0 {
            clipped = true;
            values.push(0.0);
        } else {
            values.push(lambda);
        }
    }
    Ok(PsdEigen {
        values,
        vectors: eig.eigenvectors,
        clipped,
    })
}

fn spectral_map(eig: &PsdEigen, f: impl Fn(f64) -> f64) -> Matrix {
    let n = eig.vectors.nrows();
    let mut out = Matrix::zeros(n, n);
    for (i, &lambda) in eig.values.iter().enumerate() {
        let g = f(lambda);
        if g != 0.0 {
            let v = eig.vectors.column(i);
            out += v * v.transpose() * g;
        }
    }
    out
}

/// Symmetric `U` with `UᵀU = S⁺`, from the reciprocal square roots of the
/// retained eigenvalues of `S`.
pub fn psd_root_of_pinv(s: &Matrix, tol: &Tolerance) -> Result<Matrix> {
    let eig = psd_eigen(s, "pseudoinverse root input", tol)?;
    let lambda_max = eig.values.iter().fold(0.0_f64, |m, &x| m.max(x));
    let thr = lambda_max * tol.rel_rank_tol();
    Ok(spectral_map(&eig, |l| if l > thr { 1.0 / l.sqrt() } else { 0.0 }))
}

/// Symmetric PSD square root `S^{1/2}`.
pub fn psd_sqrt(s: &Matrix, tol: &Tolerance) -> Result<Matrix> {
    let eig = psd_eigen(s, "square root input", tol)?;
    Ok(spectral_map(&eig, f64::sqrt))
}

/// Symmetric PSD matrix with eigenvalues in the rounding band clipped to zero.
/// Matrices without negative eigenvalues are returned symmetrized but otherwise
/// untouched.
pub fn clip_psd(s: &Matrix, what: &'static str, tol: &Tolerance) -> Result<Matrix> {
    let eig = psd_eigen(s, what, tol)?;
    if eig.clipped {
        Ok(spectral_map(&eig, |l| l))
    } else {
        symmetrize(s, what, tol)
    }
}

/// `‖A − B‖_F ≤ abs_residual_tol · max(1, ‖A‖_F, ‖B‖_F)`.
pub fn matrices_equal(a: &Matrix, b: &Matrix, tol: &Tolerance) -> Result<Check> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            context: "matrix equality",
            expected: a.shape(),
            found: b.shape(),
        });
    }
    let scale = a.norm().max(b.norm()).max(1.0);
    Ok(Check::new((a - b).norm() / scale, tol))
}

pub fn vectors_equal(a: &Vector, b: &Vector, tol: &Tolerance) -> Result<Check> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "vector equality",
            expected: (a.len(), 1),
            found: (b.len(), 1),
        });
    }
    let scale = a.norm().max(b.norm()).max(1.0);
    Ok(Check::new((a - b).norm() / scale, tol))
}
