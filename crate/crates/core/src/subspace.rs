//! Rank penalties, nullspace bases and rank selection.

use faer::traits::ComplexField;
use faer::{c64, Mat, Side};

use crate::error::{Error, Result};

/// Scalar types the liftings produce: `f64` (S) and `c64` (C).
pub trait Scalar: ComplexField<Real = f64> + Copy + Send + Sync + 'static {
    fn modulus(self) -> f64;
    fn re(self) -> f64;
    /// `conj(z) / |z|`, the unit factor that rotates `z` onto the positive
    /// real axis.
    fn unit_rotation(self) -> Self;
    fn scale(self, s: f64) -> Self;
}

impl Scalar for f64 {
    fn modulus(self) -> f64 {
        self.abs()
    }

    fn re(self) -> f64 {
        self
    }

    fn unit_rotation(self) -> Self {
        if self < 0.0 {
            -1.0
        } else {
            1.0
        }
    }

    fn scale(self, s: f64) -> Self {
        self * s
    }
}

impl Scalar for c64 {
    fn modulus(self) -> f64 {
        self.norm()
    }

    fn re(self) -> f64 {
        self.re
    }

    fn unit_rotation(self) -> Self {
        let n = self.norm();
        if n == 0.0 {
            c64::new(1.0, 0.0)
        } else {
            self.conj() / n
        }
    }

    fn scale(self, s: f64) -> Self {
        self * s
    }
}

/// Singular values in descending order. Values at or below
/// `max(m, n) · ε · σ₁` are reported as exactly zero.
pub fn singular_values<T: Scalar>(x: &Mat<T>) -> Result<Vec<f64>> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Ok(Vec::new());
    }
    let mut sv = x
        .singular_values()
        .map_err(|e| Error::Decomposition(format!("{e:?}")))?;
    let cutoff = x.nrows().max(x.ncols()) as f64 * f64::EPSILON * sv[0];
    for s in sv.iter_mut() {
        if *s <= cutoff {
            *s = 0.0;
        }
    }
    Ok(sv)
}

/// `J_r(X) = min ‖X − Y‖_F² over rank(Y) ≤ r`, i.e. the energy of the
/// singular values beyond the `r` largest.
pub fn penalty_jr<T: Scalar>(x: &Mat<T>, r: usize) -> Result<f64> {
    let min_dim = x.nrows().min(x.ncols());
    if r > min_dim {
        return Err(Error::Parameter(format!(
            "rank {r} exceeds min dimension {min_dim}"
        )));
    }
    let sv = singular_values(x)?;
    Ok(sv[r..].iter().map(|s| s * s).sum())
}

/// Orthonormal columns spanning an approximate right nullspace.
#[derive(Debug, Clone)]
pub struct NullspaceBasis<T> {
    basis: Mat<T>,
}

impl<T: Scalar> NullspaceBasis<T> {
    pub fn from_columns(basis: Mat<T>) -> Self {
        Self { basis }
    }

    pub fn matrix(&self) -> &Mat<T> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// `‖NᴴN − I‖_F`.
    pub fn orthonormality_error(&self) -> f64 {
        let mut g = self.basis.adjoint() * &self.basis;
        for i in 0..g.nrows() {
            g[(i, i)] -= T::from_f64_impl(1.0);
        }
        g.norm_l2()
    }
}

/// Rotates each column so that its largest-magnitude entry (first on ties)
/// is real and positive.
pub(crate) fn normalize_column_phases<T: Scalar>(m: &mut Mat<T>) {
    for j in 0..m.ncols() {
        let col = m.col_as_slice_mut(j);
        let mut best = 0;
        let mut best_mag = -1.0;
        for (i, v) in col.iter().enumerate() {
            let mag = v.modulus();
            if mag > best_mag {
                best = i;
                best_mag = mag;
            }
        }
        let rot = col[best].unit_rotation();
        for v in col.iter_mut() {
            *v *= rot;
        }
    }
}

/// Right singular vectors of the `p` smallest singular values of `x`
/// (zero singular values of a wide matrix included), in backend order.
pub fn nullspace_basis<T: Scalar>(x: &Mat<T>, p: usize) -> Result<NullspaceBasis<T>> {
    Ok(right_split(x, p)?.0)
}

/// Splits the right singular vectors of `x` into the nullspace basis of
/// the `p` smallest singular values and the remaining leading vectors.
pub fn right_split<T: Scalar>(x: &Mat<T>, p: usize) -> Result<(NullspaceBasis<T>, Mat<T>)> {
    let n = x.ncols();
    if p == 0 || p >= n {
        return Err(Error::Parameter(format!(
            "nullspace dimension {p} must lie in (0, {n})"
        )));
    }
    let padded;
    let a = if x.nrows() >= n {
        x
    } else {
        padded = Mat::from_fn(n, n, |i, j| {
            if i < x.nrows() {
                x[(i, j)]
            } else {
                T::from_f64_impl(0.0)
            }
        });
        &padded
    };
    let svd = a
        .thin_svd()
        .map_err(|e| Error::Decomposition(format!("{e:?}")))?;
    let v = svd.V();
    let mut basis = Mat::from_fn(n, p, |i, j| v[(i, n - p + j)]);
    normalize_column_phases(&mut basis);
    let lead = Mat::from_fn(n, n - p, |i, j| v[(i, j)]);
    Ok((NullspaceBasis { basis }, lead))
}

/// Eigendecomposition of a Gram matrix `XᴴX`, eigenvalues ascending and
/// clamped at zero. The solver uses it to obtain penalties and subspaces of
/// wide or large liftings without a full SVD.
#[derive(Debug, Clone)]
pub struct GramSpectrum<T> {
    values: Vec<f64>,
    vectors: Mat<T>,
}

impl<T: Scalar> GramSpectrum<T> {
    pub fn from_gram(gram: &Mat<T>) -> Result<Self> {
        let evd = gram
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Decomposition(format!("{e:?}")))?;
        let s = evd.S().column_vector();
        let values = (0..s.nrows()).map(|i| s[i].re().max(0.0)).collect();
        let mut vectors = evd.U().to_owned();
        normalize_column_phases(&mut vectors);
        Ok(Self { values, vectors })
    }

    pub fn of(x: &Mat<T>) -> Result<Self> {
        Self::from_gram(&(x.adjoint() * x))
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Ascending eigenvalues (squared singular values).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Sum of the `k` smallest eigenvalues.
    pub fn tail_energy(&self, k: usize) -> f64 {
        self.values[..k].iter().sum()
    }

    /// Eigenvectors of the `k` smallest eigenvalues.
    pub fn trailing(&self, k: usize) -> NullspaceBasis<T> {
        let n = self.dim();
        NullspaceBasis::from_columns(Mat::from_fn(n, k, |i, j| self.vectors[(i, j)]))
    }

    /// Eigenvectors of the `k` largest eigenvalues.
    pub fn leading(&self, k: usize) -> Mat<T> {
        let n = self.dim();
        Mat::from_fn(n, k, |i, j| self.vectors[(i, n - k + j)])
    }
}

/// Largest principal angle (radians) between the column spans of two
/// orthonormal bases of equal dimension.
pub fn max_principal_angle<T: Scalar>(a: &Mat<T>, b: &Mat<T>) -> Result<f64> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(Error::Shape(format!(
            "bases are {}x{} and {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    // sin θ_max = ‖(I − B Bᴴ) A‖₂
    let proj = b * (b.adjoint() * a);
    let resid = a - &proj;
    let sv = resid
        .singular_values()
        .map_err(|e| Error::Decomposition(format!("{e:?}")))?;
    let s = sv.first().copied().unwrap_or(0.0);
    Ok(s.min(1.0).asin())
}

/// Rank parameters of the two penalties.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankPlan {
    /// Rank kept by the S-side penalty.
    pub rank_s: usize,
    /// Columns of the C-side nullspace basis; the C penalty keeps
    /// `C − nullspace_p` singular values.
    pub nullspace_p: usize,
}

impl RankPlan {
    pub fn validate(&self, c_cols: usize, s_cols: usize) -> Result<()> {
        if self.rank_s == 0 || self.rank_s >= s_cols {
            return Err(Error::Parameter(format!(
                "S rank {} must lie in (0, {s_cols})",
                self.rank_s
            )));
        }
        if self.nullspace_p == 0 || self.nullspace_p >= c_cols {
            return Err(Error::Parameter(format!(
                "nullspace dimension {} must lie in (0, {c_cols})",
                self.nullspace_p
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankSide {
    /// Suggest the nullspace dimension `p` of a C-lifting.
    C,
    /// Suggest the rank `r` of an S-lifting.
    S,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankSuggestion {
    /// Number of singular values before the curve flattens.
    pub rank: usize,
    /// The parameter for the requested side: `rank` for S, `len − rank` for C.
    pub value: usize,
    pub low_confidence: bool,
}

pub const FLAT_THRESHOLD: f64 = 0.05;
pub const FLAT_DECAY: f64 = 0.9;
// Ratios such as 0.009 / 0.01 land one ulp below 0.9.
const RATIO_SLACK: f64 = 1e-12;

/// Picks the point where a descending singular value curve flattens: the
/// smallest `r` such that `σ_{r+1}/σ_1 < 0.05` and the curve right after it
/// is flat (`σ_{r+2}/σ_{r+1} ≥ 0.9`, or `σ_{r+1}` is zero or last). Falls back
/// to `floor(0.75 · len)` with `low_confidence` set.
///
/// C-side curves should cover every column of the lifting (pad wide
/// matrices with zeros) so that `value = len − rank` is a nullspace size.
pub fn suggest_rank(sv: &[f64], side: RankSide) -> Result<RankSuggestion> {
    if sv.is_empty() {
        return Err(Error::Parameter("empty singular value curve".into()));
    }
    if sv.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::Parameter(
            "singular values must be finite and >= 0".into(),
        ));
    }
    if sv.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Parameter(
            "singular values must be in descending order".into(),
        ));
    }
    let n = sv.len();
    let first = sv[0];
    let mut found = None;
    if first > 0.0 {
        for r in 1..n {
            let next = sv[r];
            if next / first >= FLAT_THRESHOLD {
                continue;
            }
            let flat = next == 0.0 || r + 1 == n || sv[r + 1] / next >= FLAT_DECAY - RATIO_SLACK;
            if flat {
                found = Some(r);
                break;
            }
        }
    }
    let (rank, low_confidence) = match found {
        Some(r) => (r, false),
        None => ((3 * n) / 4, true),
    };
    let value = match side {
        RankSide::S => rank,
        RankSide::C => n - rank,
    };
    Ok(RankSuggestion {
        rank,
        value,
        low_confidence,
    })
}
