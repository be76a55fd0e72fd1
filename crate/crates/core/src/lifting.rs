//! Structured LORAKS liftings of k-space and their adjoints.
//!
//! The C lifting maps each valid centre `p` to one complex row holding
//! `data_c(p - m)` for every channel `c` and neighbourhood offset `m`.
//! The S lifting pairs `a = data_c(p - m)` with its mirror
//! `b = data_c(2·DC - (p - m))` and emits two real rows per centre:
//!
//! ```text
//! row 1: [Re a - Re b | Im a + Im b]
//! row 2: [Im a - Im b | -(Re a + Re b)]
//! ```
//!
//! with one `2·|offsets|` column block per channel.

use faer::{c64, Mat};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kspace::{KSpaceGrid, Polarity};

/// Disc of integer offsets `(dy, dx)` with `dy² + dx² <= radius²`, ordered
/// lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighborhood {
    radius: usize,
    offsets: Vec<(isize, isize)>,
}

impl Neighborhood {
    pub fn new(radius: usize) -> Result<Self> {
        if radius == 0 {
            return Err(Error::Parameter("neighborhood radius must be >= 1".into()));
        }
        let r = radius as isize;
        let mut offsets = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                if dy * dy + dx * dx <= r * r {
                    offsets.push((dy, dx));
                }
            }
        }
        Ok(Self { radius, offsets })
    }

    /// Same disc with a caller-chosen offset order. Used to check that
    /// spectra do not depend on the ordering.
    pub fn with_order(radius: usize, order: &[usize]) -> Result<Self> {
        let base = Self::new(radius)?;
        let mut seen = vec![false; base.offsets.len()];
        if order.len() != base.offsets.len() {
            return Err(Error::Parameter(
                "order must be a permutation of the offsets".into(),
            ));
        }
        for &i in order {
            if i >= seen.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Parameter(
                    "order must be a permutation of the offsets".into(),
                ));
            }
        }
        Ok(Self {
            radius,
            offsets: order.iter().map(|&i| base.offsets[i]).collect(),
        })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn offsets(&self) -> &[(isize, isize)] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LiftKind {
    C,
    S,
}

/// Ties a lifted matrix to the grid geometry it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub kind: LiftKind,
    pub n_ch: usize,
    pub ny: usize,
    pub nx: usize,
    pub neighborhood: Neighborhood,
}

/// Structured matrix produced by a lifting.
#[derive(Debug, Clone)]
pub struct LoraksMatrix<T> {
    matrix: Mat<T>,
    provenance: Provenance,
}

impl<T> LoraksMatrix<T> {
    /// Pairs an arbitrary matrix with a provenance; dimensions are checked.
    pub fn new(matrix: Mat<T>, provenance: Provenance) -> Result<Self> {
        let lifter = Lifter::new(
            provenance.kind,
            provenance.n_ch,
            provenance.ny,
            provenance.nx,
            &provenance.neighborhood,
        )?;
        if matrix.nrows() != lifter.rows() || matrix.ncols() != lifter.cols() {
            return Err(Error::Shape(format!(
                "matrix is {}x{} but provenance implies {}x{}",
                matrix.nrows(),
                matrix.ncols(),
                lifter.rows(),
                lifter.cols()
            )));
        }
        Ok(Self { matrix, provenance })
    }

    pub fn matrix(&self) -> &Mat<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Mat<T> {
        self.matrix
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Centres whose lifted row is fully inside an `ny × nx` grid, in
/// lexicographic `(ky, kx)` order.
pub fn valid_centers(
    ny: usize,
    nx: usize,
    nb: &Neighborhood,
    kind: LiftKind,
) -> Result<Vec<(usize, usize)>> {
    let min = 2 * nb.radius() + 1;
    if ny < min || nx < min {
        return Err(Error::Shape(format!(
            "grid {ny}x{nx} is smaller than {min}x{min} required by radius {}",
            nb.radius()
        )));
    }
    let (dcy, dcx) = ((ny / 2) as isize, (nx / 2) as isize);
    let inside = |y: isize, x: isize| y >= 0 && x >= 0 && y < ny as isize && x < nx as isize;
    let mut centers = Vec::new();
    for py in 0..ny as isize {
        for px in 0..nx as isize {
            let ok = nb.offsets().iter().all(|&(dy, dx)| {
                let (qy, qx) = (py - dy, px - dx);
                inside(qy, qx) && (kind == LiftKind::C || inside(2 * dcy - qy, 2 * dcx - qx))
            });
            if ok {
                centers.push((py as usize, px as usize));
            }
        }
    }
    if centers.is_empty() {
        return Err(Error::Shape(format!(
            "no valid centres in a {ny}x{nx} grid"
        )));
    }
    Ok(centers)
}

/// Precomputed gather tables for one lifting geometry.
#[derive(Debug, Clone)]
pub struct Lifter {
    kind: LiftKind,
    n_ch: usize,
    ny: usize,
    nx: usize,
    neighborhood: Neighborhood,
    n_centers: usize,
    // Per offset, per centre: in-plane index of p - m (and its mirror for S).
    idx_a: Vec<usize>,
    idx_b: Vec<usize>,
}

impl Lifter {
    pub fn new(
        kind: LiftKind,
        n_ch: usize,
        ny: usize,
        nx: usize,
        nb: &Neighborhood,
    ) -> Result<Self> {
        if n_ch == 0 {
            return Err(Error::Shape("lifting needs at least one channel".into()));
        }
        let centers = valid_centers(ny, nx, nb, kind)?;
        let k = nb.len();
        let n_centers = centers.len();
        let (dcy, dcx) = ((ny / 2) as isize, (nx / 2) as isize);
        let mut idx_a = vec![0; k * n_centers];
        let mut idx_b = if kind == LiftKind::S {
            vec![0; k * n_centers]
        } else {
            Vec::new()
        };
        for (j, &(dy, dx)) in nb.offsets().iter().enumerate() {
            for (i, &(py, px)) in centers.iter().enumerate() {
                let qy = py as isize - dy;
                let qx = px as isize - dx;
                idx_a[j * n_centers + i] = (qy * nx as isize + qx) as usize;
                if kind == LiftKind::S {
                    idx_b[j * n_centers + i] =
                        ((2 * dcy - qy) * nx as isize + (2 * dcx - qx)) as usize;
                }
            }
        }
        Ok(Self {
            kind,
            n_ch,
            ny,
            nx,
            neighborhood: nb.clone(),
            n_centers,
            idx_a,
            idx_b,
        })
    }

    pub fn for_grid(kind: LiftKind, grid: &KSpaceGrid, nb: &Neighborhood) -> Result<Self> {
        Self::new(kind, grid.n_ch(), grid.ny(), grid.nx(), nb)
    }

    pub fn kind(&self) -> LiftKind {
        self.kind
    }

    pub fn n_centers(&self) -> usize {
        self.n_centers
    }

    pub fn rows(&self) -> usize {
        match self.kind {
            LiftKind::C => self.n_centers,
            LiftKind::S => 2 * self.n_centers,
        }
    }

    pub fn cols(&self) -> usize {
        match self.kind {
            LiftKind::C => self.n_ch * self.neighborhood.len(),
            LiftKind::S => 2 * self.n_ch * self.neighborhood.len(),
        }
    }

    /// Number of samples in a grid this lifter reads.
    pub fn grid_len(&self) -> usize {
        self.n_ch * self.ny * self.nx
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            kind: self.kind,
            n_ch: self.n_ch,
            ny: self.ny,
            nx: self.nx,
            neighborhood: self.neighborhood.clone(),
        }
    }

    fn check_len(&self, len: usize) {
        assert_eq!(
            len,
            self.grid_len(),
            "grid length does not match lifter geometry"
        );
    }

    /// C lifting of a raw channel-major buffer.
    pub fn lift_c(&self, data: &[Complex64]) -> Mat<c64> {
        assert_eq!(self.kind, LiftKind::C);
        self.check_len(data.len());
        let k = self.neighborhood.len();
        let plane = self.ny * self.nx;
        let n = self.n_centers;
        let mut m = Mat::<c64>::zeros(n, self.cols());
        for c in 0..self.n_ch {
            let src = &data[c * plane..(c + 1) * plane];
            for j in 0..k {
                let col = m.col_as_slice_mut(c * k + j);
                let idx = &self.idx_a[j * n..(j + 1) * n];
                for (dst, &q) in col.iter_mut().zip(idx) {
                    *dst = src[q];
                }
            }
        }
        m
    }

    /// Accumulates `scale · C*(m)` into `out`.
    pub fn adjoint_c_into(&self, m: &Mat<c64>, scale: f64, out: &mut [Complex64]) {
        assert_eq!(self.kind, LiftKind::C);
        assert_eq!((m.nrows(), m.ncols()), (self.rows(), self.cols()));
        self.check_len(out.len());
        let k = self.neighborhood.len();
        let plane = self.ny * self.nx;
        let n = self.n_centers;
        for c in 0..self.n_ch {
            let dst = &mut out[c * plane..(c + 1) * plane];
            for j in 0..k {
                let col = m.col_as_slice(c * k + j);
                let idx = &self.idx_a[j * n..(j + 1) * n];
                for (v, &q) in col.iter().zip(idx) {
                    dst[q] += v * scale;
                }
            }
        }
    }

    /// S lifting of a raw channel-major buffer.
    pub fn lift_s(&self, data: &[Complex64]) -> Mat<f64> {
        assert_eq!(self.kind, LiftKind::S);
        self.check_len(data.len());
        let k = self.neighborhood.len();
        let plane = self.ny * self.nx;
        let n = self.n_centers;
        let mut m = Mat::<f64>::zeros(2 * n, self.cols());
        for c in 0..self.n_ch {
            let src = &data[c * plane..(c + 1) * plane];
            for j in 0..k {
                let ia = &self.idx_a[j * n..(j + 1) * n];
                let ib = &self.idx_b[j * n..(j + 1) * n];
                {
                    let col = m.col_as_slice_mut(c * 2 * k + j);
                    for i in 0..n {
                        let (a, b) = (src[ia[i]], src[ib[i]]);
                        col[2 * i] = a.re - b.re;
                        col[2 * i + 1] = a.im - b.im;
                    }
                }
                let col = m.col_as_slice_mut(c * 2 * k + k + j);
                for i in 0..n {
                    let (a, b) = (src[ia[i]], src[ib[i]]);
                    col[2 * i] = a.im + b.im;
                    col[2 * i + 1] = -(a.re + b.re);
                }
            }
        }
        m
    }

    /// Accumulates `scale · S*(m)` into `out`, adjoint with respect to the
    /// real inner product `Re<x, y>`.
    pub fn adjoint_s_into(&self, m: &Mat<f64>, scale: f64, out: &mut [Complex64]) {
        assert_eq!(self.kind, LiftKind::S);
        assert_eq!((m.nrows(), m.ncols()), (self.rows(), self.cols()));
        self.check_len(out.len());
        let k = self.neighborhood.len();
        let plane = self.ny * self.nx;
        let n = self.n_centers;
        for c in 0..self.n_ch {
            let dst = &mut out[c * plane..(c + 1) * plane];
            for j in 0..k {
                let ia = &self.idx_a[j * n..(j + 1) * n];
                let ib = &self.idx_b[j * n..(j + 1) * n];
                let first = m.col_as_slice(c * 2 * k + j);
                let second = m.col_as_slice(c * 2 * k + k + j);
                for i in 0..n {
                    let (m11, m21) = (first[2 * i], first[2 * i + 1]);
                    let (m12, m22) = (second[2 * i], second[2 * i + 1]);
                    dst[ia[i]] += Complex64::new(m11 - m22, m12 + m21) * scale;
                    dst[ib[i]] += Complex64::new(-m11 - m22, m12 - m21) * scale;
                }
            }
        }
    }
}

pub fn build_c(grid: &KSpaceGrid, nb: &Neighborhood) -> Result<LoraksMatrix<c64>> {
    let lifter = Lifter::for_grid(LiftKind::C, grid, nb)?;
    Ok(LoraksMatrix {
        matrix: lifter.lift_c(grid.data()),
        provenance: lifter.provenance(),
    })
}

pub fn build_s(grid: &KSpaceGrid, nb: &Neighborhood) -> Result<LoraksMatrix<f64>> {
    let lifter = Lifter::for_grid(LiftKind::S, grid, nb)?;
    Ok(LoraksMatrix {
        matrix: lifter.lift_s(grid.data()),
        provenance: lifter.provenance(),
    })
}

fn lifter_for(m: &Provenance, expected: LiftKind) -> Result<Lifter> {
    if m.kind != expected {
        return Err(Error::Shape(format!(
            "expected a {expected:?} matrix, got {:?}",
            m.kind
        )));
    }
    Lifter::new(m.kind, m.n_ch, m.ny, m.nx, &m.neighborhood)
}

pub fn adjoint_c(m: &LoraksMatrix<c64>) -> Result<KSpaceGrid> {
    let p = m.provenance();
    let lifter = lifter_for(p, LiftKind::C)?;
    let mut out = KSpaceGrid::zeros(p.n_ch, p.ny, p.nx, Polarity::None);
    lifter.adjoint_c_into(m.matrix(), 1.0, out.data_mut());
    Ok(out)
}

pub fn adjoint_s(m: &LoraksMatrix<f64>) -> Result<KSpaceGrid> {
    let p = m.provenance();
    let lifter = lifter_for(p, LiftKind::S)?;
    let mut out = KSpaceGrid::zeros(p.n_ch, p.ny, p.nx, Polarity::None);
    lifter.adjoint_s_into(m.matrix(), 1.0, out.data_mut());
    Ok(out)
}
