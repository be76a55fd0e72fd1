//! Conjugate gradient on complex vectors under the real inner product
//! `Re<x, y>`, for operators that are only real-linear.

use num_complex::Complex64;

pub(crate) fn dot(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.re * y.re + x.im * y.im)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    /// Final residual norm relative to the initial one.
    pub relative_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Breakdown {
    pub iteration: usize,
    pub curvature: f64,
    pub residual: f64,
}

/// Solves `H x = b` from `x = 0`. Every iterate lowers the quadratic
/// `½<x, Hx> − <b, x>`, so stopping early never increases it.
pub(crate) fn solve<F>(
    mut apply: F,
    b: &[Complex64],
    max_iter: usize,
    tol: f64,
) -> std::result::Result<(Vec<Complex64>, CgStats), Breakdown>
where
    F: FnMut(&[Complex64]) -> Vec<Complex64>,
{
    let n = b.len();
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    let mut r = b.to_vec();
    let mut rs = dot(&r, &r);
    let rs0 = rs;
    if rs0 == 0.0 {
        return Ok((
            x,
            CgStats {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let mut p = r.clone();
    let mut it = 0;
    while it < max_iter && rs > tol * tol * rs0 {
        let hp = apply(&p);
        let curv = dot(&p, &hp);
        if !curv.is_finite() || curv <= 0.0 {
            return Err(Breakdown {
                iteration: it,
                curvature: curv,
                residual: (rs / rs0).sqrt(),
            });
        }
        let alpha = rs / curv;
        for i in 0..n {
            x[i] += p[i] * alpha;
            r[i] -= hp[i] * alpha;
        }
        let rs_new = dot(&r, &r);
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + p[i] * beta;
        }
        rs = rs_new;
        it += 1;
    }
    Ok((
        x,
        CgStats {
            iterations: it,
            relative_residual: (rs / rs0).sqrt(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_real_linear_system() {
        // H(z) = 3z + conj(z): real-linear, symmetric positive definite.
        let b: Vec<Complex64> = (0..5)
            .map(|i| Complex64::new(i as f64, 1.0 - i as f64))
            .collect();
        let h = |z: &[Complex64]| z.iter().map(|v| v * 3.0 + v.conj()).collect::<Vec<_>>();
        let (x, stats) = solve(h, &b, 50, 1e-14).unwrap();
        assert!(stats.relative_residual <= 1e-14);
        for (xi, bi) in x.iter().zip(&b) {
            let back = xi * 3.0 + xi.conj();
            assert!((back - bi).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_rhs_is_immediate() {
        let b = vec![Complex64::new(0.0, 0.0); 3];
        let (x, stats) = solve(|z| z.to_vec(), &b, 10, 1e-8).unwrap();
        assert_eq!(stats.iterations, 0);
        assert!(x.iter().all(|v| *v == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn negative_curvature_is_breakdown() {
        let b = vec![Complex64::new(1.0, 0.0); 3];
        let err = solve(|z| z.iter().map(|v| -v).collect(), &b, 10, 1e-8).unwrap_err();
        assert_eq!(err.iteration, 0);
        assert!(err.curvature < 0.0);
    }
}
